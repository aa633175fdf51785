"""
Tests for the LSTM generator: forward pass, loss, exact backward pass,
checkpoints, training and sampling.
"""

import numpy as np
import pytest

from config.settings import settings
from models.configs import AUGMENT_FACTORS, TRAINABLE_DIMS, GeneratorConfig, SweepPlan, hyperparameter_grid
from services import seqmodel
from services.embeddings import BOS, EOS, PAD, build_embedding, build_vocabulary, sha_fixed_embedding
from services.genmetrics import canonical
from services.optim import AdamState
from services.smiles_core import is_valid, tokenize
from utils import checkpoint_io
from utils.errors import (
    AllPositionsMasked,
    BadTemperature,
    CheckpointError,
    EmptyCorpus,
    InvalidSmiles,
    ShapeMismatch,
    StaleCache,
)
from utils.logger import get_logger
from utils.rng import stage_rng, stage_seed

logger = get_logger("test_seqmodel")

# full-batch Adam step size for the loss-trend check
MONOTONE_LR = 1e-3

TOY_CONFIG = GeneratorConfig(
    hidden_size=8,
    layers=2,
    d=10,
    d_t=4,
    embedding_mode="sha_fixed",
    dropout=0.0,
    learning_rate=1e-2,
    batch_size=4,
    epochs=2,
    max_sample_length=40,
    val_fraction=0.2,
    seed=7,
)


@pytest.fixture
def toy():
    """Six-token vocabulary, 2 x 8 LSTM and a padded two-sequence batch."""
    vocab = build_vocabulary([tokenize("CCO"), tokenize("CN")])
    assert len(vocab) == 6
    emb = build_embedding(vocab, d=10, d_t=4, mode="sha_fixed", seed=3)
    params = seqmodel.init_parameters(TOY_CONFIG, emb, stage_rng(3, "test.init"))
    inputs, targets, mask = seqmodel.pad_batch([vocab.encode(tokenize("CCO")), vocab.encode(tokenize("CN"))])
    return vocab, params, inputs, targets, mask


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _reference_logits(params, ids):
    """Plain per-timestep LSTM over one sequence."""
    emb = params.embedding
    H = params.hidden_size
    h = [np.zeros(H) for _ in range(params.layers)]
    c = [np.zeros(H) for _ in range(params.layers)]
    out = []
    for token in ids:
        x = np.concatenate([emb.E_t[token], emb.E_f[token]])
        for layer in range(params.layers):
            W = params.weights[f"lstm{layer}.W"]
            U = params.weights[f"lstm{layer}.U"]
            b = params.weights[f"lstm{layer}.b"]
            a = W @ x + U @ h[layer] + b
            i, f, g, o = _sigmoid(a[:H]), _sigmoid(a[H : 2 * H]), np.tanh(a[2 * H : 3 * H]), _sigmoid(a[3 * H :])
            c[layer] = f * c[layer] + i * g
            h[layer] = o * np.tanh(c[layer])
            x = h[layer]
        out.append(params.weights["dec.W"] @ x + params.weights["dec.b"])
    return np.array(out)


def _check_gradients(params, inputs, targets, mask, dropout=0.0, seed=None, names=None):
    def objective():
        logits, _ = seqmodel.forward(params, inputs, dropout_on=dropout > 0.0, seed=seed, dropout=dropout)
        return seqmodel.loss(logits, targets, mask)

    logits, cache = seqmodel.forward(params, inputs, dropout_on=dropout > 0.0, seed=seed, dropout=dropout)
    grads = seqmodel.backward(params, cache, seqmodel.loss_gradient(logits, targets, mask))

    tensors = dict(params.weights)
    tensors["emb.E_t"] = params.embedding.E_t
    analytic = dict(grads)
    analytic["emb.E_t"] = grads["emb"][:, : params.embedding.d_t]
    eps = 1e-5
    for name in names or sorted(tensors):
        arr = tensors[name]
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            plus = objective()
            arr[idx] = orig - eps
            minus = objective()
            arr[idx] = orig
            numeric[idx] = (plus - minus) / (2.0 * eps)
        scale = np.maximum(np.maximum(np.abs(numeric), np.abs(analytic[name])), 1e-5)
        rel = np.max(np.abs(numeric - analytic[name]) / scale)
        assert rel <= 1e-4, f"{name}: relative error {rel:.2e}"
    return grads


# --------------------------------------------------------------------------
# forward / loss
# --------------------------------------------------------------------------


def test_zero_weights_give_zero_logits(toy):
    _, params, inputs, _, _ = toy
    for key in params.weights:
        params.weights[key] = np.zeros_like(params.weights[key])
    logits, _ = seqmodel.forward(params, inputs)
    assert np.all(logits == 0.0)


def test_forward_matches_reference(toy):
    vocab, params, _, _, _ = toy
    ids = vocab.encode(tokenize("CO"))[:-1]
    logits, _ = seqmodel.forward(params, ids[None, :])
    np.testing.assert_allclose(logits[0], _reference_logits(params, ids), rtol=1e-12, atol=1e-13)


def test_forward_without_dropout_is_deterministic(toy):
    _, params, inputs, _, _ = toy
    a, _ = seqmodel.forward(params, inputs, dropout_on=False, seed=1, dropout=0.5)
    b, _ = seqmodel.forward(params, inputs, dropout_on=False, seed=2, dropout=0.5)
    np.testing.assert_array_equal(a, b)


def test_padding_columns_do_not_change_logits(toy):
    _, params, inputs, _, mask = toy
    padded = np.concatenate([inputs, np.full((inputs.shape[0], 3), PAD)], axis=1)
    a, _ = seqmodel.forward(params, inputs)
    b, _ = seqmodel.forward(params, padded)
    np.testing.assert_allclose(b[:, : inputs.shape[1]][mask], a[mask], rtol=0, atol=1e-12)


def test_forward_rejects_bad_batch(toy):
    _, params, inputs, _, _ = toy
    with pytest.raises(ShapeMismatch):
        seqmodel.forward(params, inputs[0])
    with pytest.raises(ShapeMismatch):
        seqmodel.forward(params, np.full((1, 3), params.embedding.V))


def test_uniform_logits_loss_is_log_v():
    logits = np.zeros((2, 3, 5))
    targets = np.array([[1, 2, 3], [4, 0, 0]])
    mask = np.array([[True, True, True], [True, False, False]])
    assert seqmodel.loss(logits, targets, mask) == pytest.approx(np.log(5.0), abs=1e-12)


def test_confident_logits_loss_is_near_zero():
    targets = np.array([[2, 0]])
    logits = np.full((1, 2, 4), -50.0)
    logits[0, 0, 2] = 50.0
    logits[0, 1, 0] = 50.0
    assert seqmodel.loss(logits, targets, np.ones((1, 2), dtype=bool)) < 1e-12


def test_loss_matches_direct_sum(rng):
    logits = rng.standard_normal((3, 4, 6))
    targets = rng.integers(0, 6, size=(3, 4))
    mask = rng.random((3, 4)) < 0.7
    mask[0, 0] = True
    total, count = 0.0, 0
    for b in range(3):
        for t in range(4):
            if mask[b, t]:
                row = logits[b, t]
                total -= row[targets[b, t]] - np.log(np.sum(np.exp(row)))
                count += 1
    assert seqmodel.loss(logits, targets, mask) == pytest.approx(total / count, rel=1e-12)


def test_loss_all_masked():
    with pytest.raises(AllPositionsMasked):
        seqmodel.loss(np.zeros((1, 2, 3)), np.zeros((1, 2), dtype=np.int64), np.zeros((1, 2), dtype=bool))


def test_masked_positions_have_no_gradient(toy):
    _, params, inputs, targets, mask = toy
    logits, _ = seqmodel.forward(params, inputs)
    d_logits = seqmodel.loss_gradient(logits, targets, mask)
    assert np.all(d_logits[~mask] == 0.0)


# --------------------------------------------------------------------------
# backward
# --------------------------------------------------------------------------


def test_gradients_match_finite_differences(toy):
    _, params, inputs, targets, mask = toy
    grads = _check_gradients(params, inputs, targets, mask)
    assert np.all(grads["emb"][:, params.embedding.d_t :] == 0.0)


def test_gradients_with_dropout_masks(toy):
    _, params, inputs, targets, mask = toy
    _check_gradients(params, inputs, targets, mask, dropout=0.3, seed=11,
                     names=["dec.W", "lstm0.W", "lstm1.U", "emb.E_t"])


def test_backward_rejects_stale_cache(toy):
    _, params, inputs, targets, mask = toy
    logits, cache = seqmodel.forward(params, inputs)
    params.bump()
    with pytest.raises(StaleCache):
        seqmodel.backward(params, cache, seqmodel.loss_gradient(logits, targets, mask))


def test_train_step_keeps_fixed_block(toy):
    _, params, inputs, targets, mask = toy
    fixed = params.embedding.E_f.copy()
    trainable = params.embedding.E_t.copy()
    state = AdamState()
    for _ in range(5):
        seqmodel.train_step(params, state, inputs, targets, mask, lr=1e-2)
    assert params.embedding.E_f.tobytes() == fixed.tobytes()
    assert not np.array_equal(params.embedding.E_t, trainable)
    assert state.t == 5
    assert params.version == 5


# --------------------------------------------------------------------------
# training / checkpoints
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained(smiles_20):
    return seqmodel.train(TOY_CONFIG, smiles_20[:6])


def test_training_is_deterministic(trained, smiles_20):
    checkpoint, history = trained
    again, history_again = seqmodel.train(TOY_CONFIG, smiles_20[:6])
    assert history == history_again
    assert checkpoint.to_bytes() == again.to_bytes()
    assert history.epochs == TOY_CONFIG.epochs
    assert all(v is not None for v in history.val_loss)


def test_training_conserves_fixed_block(trained):
    checkpoint, _ = trained
    emb = checkpoint.params.embedding
    expected = sha_fixed_embedding(len(checkpoint.vocab), TOY_CONFIG.d, TOY_CONFIG.d_t)
    assert emb.E_f.tobytes() == expected.tobytes()


def test_checkpoint_round_trip(trained, tmp_path):
    checkpoint, _ = trained
    path = checkpoint.save(tmp_path / "generator.ckpt")
    loaded = seqmodel.GeneratorCheckpoint.load(path)
    assert loaded.to_bytes() == checkpoint.to_bytes()
    assert loaded.config == checkpoint.config
    assert loaded.vocab == checkpoint.vocab
    for key, value in checkpoint.params.weights.items():
        assert loaded.params.weights[key].tobytes() == value.tobytes()
    assert loaded.adam.t == checkpoint.adam.t
    assert seqmodel.sample(loaded, 6, seed=8) == seqmodel.sample(checkpoint, 6, seed=8)


def test_checkpoint_rejects_foreign_files(trained, tmp_path):
    checkpoint, _ = trained
    blob = checkpoint.to_bytes()
    with pytest.raises(CheckpointError):
        seqmodel.GeneratorCheckpoint.from_bytes(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError):
        seqmodel.GeneratorCheckpoint.from_bytes(checkpoint_io.encode("hemgen.predictor", {}, {}))
    with pytest.raises(CheckpointError):
        seqmodel.GeneratorCheckpoint.load(tmp_path / "missing.ckpt")


def test_resumed_training_matches_one_long_run(smiles_20, tmp_path):
    config = TOY_CONFIG.model_copy(update={"dropout": 0.2, "augment_factor": 3})
    corpus = smiles_20[:6]
    first, _ = seqmodel.train(config, corpus)
    saved = seqmodel.GeneratorCheckpoint.load(first.save(tmp_path / "generator.ckpt"))
    resumed, history = seqmodel.train(config.model_copy(update={"epochs": 3}), corpus, resume=saved)
    straight, _ = seqmodel.train(config.model_copy(update={"epochs": 5}), corpus)

    assert len(history.train_loss) == 3
    assert resumed.adam.t == straight.adam.t
    for key, value in straight.params.weights.items():
        np.testing.assert_array_equal(resumed.params.weights[key], value)
    np.testing.assert_array_equal(resumed.params.embedding.E_t, straight.params.embedding.E_t)
    assert resumed.rng_state == straight.rng_state
    assert saved.to_bytes() == first.to_bytes()


def test_resume_rejects_a_different_model(trained, smiles_20):
    checkpoint, _ = trained
    with pytest.raises(CheckpointError):
        seqmodel.train(TOY_CONFIG.model_copy(update={"d_t": 5}), smiles_20[:6], resume=checkpoint)
    with pytest.raises(CheckpointError):
        seqmodel.train(TOY_CONFIG, ["C#N", "C=O"], resume=checkpoint)


def test_train_input_errors():
    with pytest.raises(EmptyCorpus):
        seqmodel.train(TOY_CONFIG, [])
    with pytest.raises(InvalidSmiles) as info:
        seqmodel.train(TOY_CONFIG, ["CCO", "C(", "CC"])
    assert info.value.index == 1


def test_split_corpus_keeps_every_molecule(smiles_20):
    train, val = seqmodel.split_corpus(smiles_20, 0.25, seed=4)
    assert len(val) == 5
    assert sorted(train + val) == sorted(smiles_20)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def test_greedy_sampling_is_deterministic(trained):
    checkpoint, _ = trained
    a = seqmodel.sample(checkpoint, 5, greedy=True, seed=1)
    b = seqmodel.sample(checkpoint, 5, greedy=True, seed=2)
    assert a == b
    assert len(set(a)) == 1


def test_sampling_is_seeded(trained):
    checkpoint, _ = trained
    assert seqmodel.sample(checkpoint, 8, seed=3) == seqmodel.sample(checkpoint, 8, seed=3)


def test_sample_length_limit(trained):
    checkpoint, _ = trained
    # every token in this vocabulary is a single character
    samples = seqmodel.sample(checkpoint, 10, temperature=2.0, seed=5, max_length=12)
    assert all(len(s) <= 12 for s in samples)


def test_sample_argument_errors(trained):
    checkpoint, _ = trained
    for temperature in (0.0, -1.0, float("inf")):
        with pytest.raises(BadTemperature):
            seqmodel.sample(checkpoint, 3, temperature=temperature)
    with pytest.raises(ValueError):
        seqmodel.sample(checkpoint, 0)


@pytest.mark.slow
def test_overfit_small_corpus(smiles_20):
    """A small model memorizes the fixture molecules and samples them back."""
    config = GeneratorConfig(
        hidden_size=64,
        layers=2,
        d=32,
        d_t=8,
        embedding_mode="sha_fixed",
        dropout=0.0,
        learning_rate=1e-2,
        batch_size=4,
        epochs=500,
        max_sample_length=120,
        val_fraction=0.0,
        seed=42,
    )
    checkpoint, history = seqmodel.train(config, smiles_20)
    assert history.train_loss[-1] <= 0.2 * history.train_loss[0]

    fixed = sha_fixed_embedding(len(checkpoint.vocab), config.d, config.d_t)
    assert checkpoint.params.embedding.E_f.tobytes() == fixed.tobytes()

    known = {canonical(s) for s in smiles_20}
    samples = seqmodel.sample(checkpoint, 100, temperature=0.5, seed=9)
    recalled = sum(1 for s in samples if is_valid(s) and canonical(s) in known)
    assert recalled >= 80
    assert sum(is_valid(s) for s in samples) > 50

    untrained_config = config.model_copy(update={"epochs": 1, "learning_rate": 1e-12})
    untrained, _ = seqmodel.train(untrained_config, smiles_20)
    noise = seqmodel.sample(untrained, 100, temperature=1.0, seed=9)
    assert sum(is_valid(s) for s in noise) < 20


def _moving_average(values, window=10):
    return np.convolve(values, np.ones(window) / window, "valid")


@pytest.mark.slow
def test_overfit_loss_trend_is_non_increasing(smiles_20):
    """Full-batch steps on the fixture corpus: the 10-epoch moving average never rises."""
    config = GeneratorConfig(
        hidden_size=64,
        layers=2,
        d=32,
        d_t=8,
        embedding_mode="sha_fixed",
        dropout=0.0,
        learning_rate=MONOTONE_LR,
        batch_size=len(smiles_20),
        epochs=100,
        val_fraction=0.0,
        seed=42,
    )
    _, history = seqmodel.train(config, smiles_20)
    smoothed = _moving_average(history.train_loss[:100])
    assert smoothed.size == 91
    steps = np.diff(smoothed)
    assert np.all(steps <= 0.0), np.flatnonzero(steps > 0.0).tolist()
    assert smoothed[-1] < smoothed[0]


@pytest.mark.slow
def test_long_training_moves_only_the_trainable_block(smiles_20):
    """Model 3 at the published widths keeps E_f bit-identical over 300 epochs."""
    config = GeneratorConfig.model3(hidden_size=64, d=128, d_t=50, val_fraction=0.0, seed=13)
    checkpoint, history = seqmodel.train(config, smiles_20)
    assert history.epochs == 300

    emb = checkpoint.params.embedding
    fixed = sha_fixed_embedding(len(checkpoint.vocab), config.d, config.d_t)
    assert emb.E_f.tobytes() == fixed.tobytes()

    start = build_embedding(
        checkpoint.vocab,
        d=config.d,
        d_t=config.d_t,
        mode=config.embedding_mode,
        seed=stage_seed(config.seed, "generator.embedding"),
    )
    assert start.E_f.tobytes() == fixed.tobytes()
    # PAD is always masked and EOS is never fed back, so their rows get no gradient
    rows = [i for i in range(len(checkpoint.vocab)) if i not in (PAD, EOS)]
    assert BOS in rows
    changed = emb.E_t[rows] != start.E_t[rows]
    assert changed.mean() >= 0.99
    np.testing.assert_array_equal(emb.E_t[[PAD, EOS]], start.E_t[[PAD, EOS]])


# --------------------------------------------------------------------------
# model variants / grid
# --------------------------------------------------------------------------


def test_model_variants():
    one = GeneratorConfig.model1(d=64, d_t=30)
    two = GeneratorConfig.model2(d=64, d_t=30)
    three = GeneratorConfig.model3(d=64, d_t=30)
    assert (one.embedding_mode, one.d_f) == ("trainable_only", 0)
    assert (two.embedding_mode, two.d_f) == ("random_fixed", 34)
    assert (three.embedding_mode, three.d_f) == ("sha_fixed", 34)
    with pytest.raises(ValueError):
        GeneratorConfig.model3(d=20, d_t=30)


def test_gradient_clip_defaults_to_settings(monkeypatch):
    assert GeneratorConfig().grad_clip == settings.GRAD_CLIP_NORM
    monkeypatch.setattr(settings, "GRAD_CLIP_NORM", 1.5)
    assert GeneratorConfig().grad_clip == 1.5
    assert GeneratorConfig(grad_clip=None).grad_clip is None


def test_hyperparameter_grid_skips_oversized_trainable_block():
    full = list(hyperparameter_grid(GeneratorConfig(d=128)))
    assert len(full) == 4 * 4 * 3 * len(TRAINABLE_DIMS)
    assert len({(c.learning_rate, c.dropout, c.batch_size, c.d_t) for c in full}) == len(full)

    narrow = list(hyperparameter_grid(GeneratorConfig.model2(d=64, hidden_size=16, seed=4)))
    assert len(narrow) == 4 * 4 * 3 * 3
    assert max(c.d_t for c in narrow) == 50
    assert all(c.embedding_mode == "random_fixed" and c.hidden_size == 16 and c.seed == 4 for c in narrow)


def test_sweep_plan_pairs_models_at_each_grid_point():
    plan = SweepPlan()
    points = list(plan.points(GeneratorConfig(d=128)))
    assert len(points) == 2 * len(AUGMENT_FACTORS) * 4 * 4 * 3 * len(TRAINABLE_DIMS)
    first, second = points[0], points[1]
    assert (first.embedding_mode, second.embedding_mode) == ("random_fixed", "sha_fixed")
    assert first.model_copy(update={"embedding_mode": "sha_fixed"}) == second
    assert [p.augment_factor for p in points[:: len(points) // 3]] == [1, 3, 5]

    tiny = SweepPlan(modes=("sha_fixed",), augment_factors=(3,), learning_rates=(1e-3,), dropouts=(0.0,),
                     batch_sizes=(8,), trainable_dims=(4, 200))
    only = list(tiny.points(GeneratorConfig(d=12)))
    assert len(only) == 1
    assert (only[0].augment_factor, only[0].d_t, only[0].batch_size) == (3, 4, 8)


@pytest.mark.parametrize(
    "axes",
    [{"modes": ()}, {"augment_factors": (2,)}, {"learning_rates": (1e-3, 1e-3)}, {"modes": ("bogus",)}],
)
def test_sweep_plan_rejects_bad_axes(axes):
    with pytest.raises(ValueError):
        SweepPlan(**axes)

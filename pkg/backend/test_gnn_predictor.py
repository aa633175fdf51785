"""
Tests for the attentive graph regressor: featurization, forward invariants,
exact gradients, target scaling, metrics, checkpoints and training.
"""

import numpy as np
import pytest

from models.configs import PredictorConfig
from models.records import TARGETS
from services.gnn_predictor import (
    EDGE_FEATURES,
    H50_COLUMN,
    NODE_FEATURES,
    PredictorCheckpoint,
    TargetScaler,
    backward,
    batch_graphs,
    evaluate_predictor,
    featurize,
    init_params,
    predict,
    predict_properties,
    regression_metrics,
    train_predictor,
)
from services.graph_ops import segment_sum
from services.smiles_core import parse
from utils.errors import (
    DegenerateTarget,
    InvalidSmiles,
    LengthMismatch,
    PredictorError,
    UnsupportedElement,
    ZeroVariance,
)
from utils.logger import get_logger

logger = get_logger("test_gnn_predictor")

SMALL = PredictorConfig(hidden=5, layers=2, readout_steps=2, epochs=3, batch_size=4, seed=3)


def _graph(smiles):
    return featurize(parse(smiles))


@pytest.fixture
def small_params():
    return init_params(SMALL, np.random.default_rng(21))


# --------------------------------------------------------------------------
# featurization
# --------------------------------------------------------------------------


def test_featurize_single_atom():
    g = _graph("C")
    assert g.x.shape == (1, NODE_FEATURES)
    assert g.n_edges == 0
    assert g.edge_attr.shape == (0, EDGE_FEATURES)


def test_featurize_ethanol_directed_edges():
    g = _graph("CCO")
    assert g.n_nodes == 3
    assert g.n_edges == 4
    pairs = set(zip(g.edge_index[0].tolist(), g.edge_index[1].tolist()))
    assert pairs == {(0, 1), (1, 0), (1, 2), (2, 1)}
    assert np.all(g.x.sum(axis=1) > 0)


def test_featurize_ring_flags():
    g = _graph("C1CC1C")
    ring_col = NODE_FEATURES - 1
    assert g.x[:, ring_col].tolist() == [1.0, 1.0, 1.0, 0.0]
    assert g.edge_attr[:, 4].sum() == 6.0


def test_featurize_unsupported_element():
    with pytest.raises(UnsupportedElement):
        _graph("[Na+].[Cl-]")


def test_batch_offsets_edges():
    a, b = _graph("CCO"), _graph("CN")
    batch = batch_graphs([a, b])
    assert batch.n_graphs == 2
    assert batch.graph_id.tolist() == [0, 0, 0, 1, 1]
    assert batch.edge_index[:, 4:].min() == 3


# --------------------------------------------------------------------------
# forward invariants
# --------------------------------------------------------------------------


def test_single_atom_prediction(small_params):
    pred, cache = predict(small_params, _graph("C"), readout_steps=2)
    assert pred.shape == (1, 9)
    assert np.all(np.isfinite(pred))
    weights = cache.attention_weights()
    assert all(alpha.size == 0 for alpha in weights["layers"])
    for alpha in weights["readout"]:
        assert alpha.tolist() == [1.0]


def test_prediction_ignores_atom_order(small_params):
    a, _ = predict(small_params, _graph("CCO"), readout_steps=2)
    b, _ = predict(small_params, _graph("OCC"), readout_steps=2)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_prediction_ignores_batch_order(small_params):
    graphs = [_graph("CCO"), _graph("C1CC1N"), _graph("CN(=O)=O")]
    forward, _ = predict(small_params, batch_graphs(graphs), readout_steps=2)
    backward_order, _ = predict(small_params, batch_graphs(graphs[::-1]), readout_steps=2)
    np.testing.assert_allclose(forward, backward_order[::-1], rtol=0, atol=1e-12)


def test_attention_is_normalized(small_params):
    batch = batch_graphs([_graph("CCO"), _graph("C1CC1N")])
    _, cache = predict(small_params, batch, readout_steps=2)
    dst = batch.edge_index[1]
    for alpha in cache.attention_weights()["layers"]:
        np.testing.assert_allclose(segment_sum(alpha, dst, batch.n_nodes), 1.0, rtol=0, atol=1e-12)
    for alpha in cache.attention_weights()["readout"]:
        np.testing.assert_allclose(segment_sum(alpha, batch.graph_id, 2), 1.0, rtol=0, atol=1e-12)


def test_readout_spans_every_component(small_params):
    salt = _graph("[NH4+].[O-][N+](=O)[O-]")
    assert salt.n_nodes == 5
    batch = batch_graphs([salt, _graph("CCO")])
    _, cache = predict(small_params, batch, readout_steps=3)
    readout = cache.attention_weights()["readout"]
    assert len(readout) == 3
    for alpha in readout:
        assert np.all(alpha[:5] > 0.0)
        np.testing.assert_allclose(segment_sum(alpha, batch.graph_id, 2), 1.0, rtol=0, atol=1e-12)


def test_empty_graph_is_rejected(small_params):
    with pytest.raises(PredictorError):
        predict(small_params, batch_graphs([]))


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------


def test_backward_matches_finite_differences(small_params):
    batch = batch_graphs([_graph("CCO"), _graph("C1CC1N")])
    projection = np.random.default_rng(5).standard_normal((2, 9))

    def objective():
        pred, _ = predict(small_params, batch, readout_steps=2)
        return float(np.sum(pred * projection))

    _, cache = predict(small_params, batch, readout_steps=2)
    grads = backward(small_params, cache, projection)
    assert set(grads) == set(small_params)

    eps = 1e-6
    picker = np.random.default_rng(8)
    for name, tensor in small_params.items():
        flat = tensor.reshape(-1)
        for k in picker.choice(flat.size, size=min(flat.size, 12), replace=False):
            saved = flat[k]
            flat[k] = saved + eps
            up = objective()
            flat[k] = saved - eps
            down = objective()
            flat[k] = saved
            numeric = (up - down) / (2 * eps)
            analytic = grads[name].reshape(-1)[k]
            assert abs(numeric - analytic) <= 1e-6 + 1e-5 * abs(analytic), (name, int(k), numeric, analytic)


# --------------------------------------------------------------------------
# scaling / metrics
# --------------------------------------------------------------------------


def test_scaler_round_trip(records_16):
    y = np.stack([r.property_vector() for r in records_16])
    scaler = TargetScaler.fit(y)
    z = scaler.transform(y)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(scaler.inverse(z), y, rtol=1e-12, atol=1e-12)


def test_scaler_log_h50():
    y = np.arange(1.0, 28.0).reshape(3, 9)
    scaler = TargetScaler.fit(y)
    z = scaler.transform(y)
    log_col = np.log10(y[:, H50_COLUMN])
    np.testing.assert_allclose(z[:, H50_COLUMN], (log_col - log_col.mean()) / log_col.std(), atol=1e-12)
    bad = y.copy()
    bad[0, H50_COLUMN] = 0.0
    with pytest.raises(PredictorError):
        TargetScaler.fit(bad)


def test_scaler_constant_column():
    y = np.arange(1.0, 19.0).reshape(2, 9)
    y[:, 2] = 4.0
    with pytest.raises(DegenerateTarget) as info:
        TargetScaler.fit(y)
    assert info.value.target == TARGETS[2]


def test_regression_metrics_examples():
    worst = regression_metrics(np.array([0.0, 1.0, 2.0]), np.zeros(3))["0"]
    assert worst.r2 == pytest.approx(-1.5)
    assert worst.mae == pytest.approx(1.0)
    assert worst.rmse == pytest.approx(np.sqrt(5.0 / 3.0))
    perfect = regression_metrics(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 2.0]))["0"]
    assert perfect.r2 == 1.0 and perfect.mae == 0.0


def test_regression_metrics_errors():
    with pytest.raises(LengthMismatch):
        regression_metrics(np.zeros(3), np.zeros(4))
    with pytest.raises(ZeroVariance):
        regression_metrics(np.ones(3), np.zeros(3))


# --------------------------------------------------------------------------
# training / checkpoints
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained_small(records_16):
    return train_predictor(SMALL, records_16)


def test_training_is_deterministic(records_16, trained_small):
    ckpt, history = trained_small
    again, again_history = train_predictor(SMALL, records_16)
    assert ckpt.to_bytes() == again.to_bytes()
    assert history == again_history
    assert len(history.train_rmse) == SMALL.epochs
    assert ckpt.train_index and ckpt.test_index
    assert not set(ckpt.train_index) & set(ckpt.test_index)


def test_checkpoint_round_trip(tmp_path, trained_small):
    ckpt, _ = trained_small
    path = ckpt.save(tmp_path / "predictor.ckpt")
    loaded = PredictorCheckpoint.load(path)
    smiles = ["CCO", "C1N(CN(CN1[N+](=O)[O-])[N+](=O)[O-])[N+](=O)[O-]"]
    np.testing.assert_array_equal(predict_properties(loaded, smiles), predict_properties(ckpt, smiles))
    assert loaded.test_index == ckpt.test_index


def test_predict_properties_shapes(trained_small):
    ckpt, _ = trained_small
    out = predict_properties(ckpt, ["CCO", "CN(=O)=O", "C"])
    assert out.shape == (3, 9)
    assert np.all(out[:, H50_COLUMN] > 0.0)
    assert predict_properties(ckpt, []).shape == (0, 9)
    with pytest.raises(InvalidSmiles):
        predict_properties(ckpt, ["CCO", "C("])


def test_evaluate_predictor_keys(records_16, trained_small):
    ckpt, _ = trained_small
    metrics = evaluate_predictor(ckpt, records_16)
    assert list(metrics) == list(TARGETS)


def test_training_needs_two_records(records_16):
    with pytest.raises(PredictorError):
        train_predictor(SMALL, records_16[:1])


@pytest.mark.slow
def test_predictor_fits_sixteen_molecules(records_16):
    config = PredictorConfig(
        hidden=32, layers=2, readout_steps=2, learning_rate=1e-3, weight_decay=0.0,
        epochs=2000, batch_size=16, test_fraction=0.0, seed=1,
    )
    ckpt, history = train_predictor(config, records_16)
    assert history.train_rmse[-1] < history.train_rmse[0]
    metrics = evaluate_predictor(ckpt, records_16)
    assert len(metrics) == 9
    assert all(m.r2 >= 0.95 for m in metrics.values()), {k: m.r2 for k, m in metrics.items()}

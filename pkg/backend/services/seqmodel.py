"""
Character-level LSTM SMILES generator in numpy (float64).

Architecture: hybrid embedding -> dropout -> L stacked LSTM layers ->
dropout -> linear decoder to V logits. Gate order in the stacked weights is
(i, f, g, o):

    a = W x + U h + b
    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o);  g = tanh(a_g)
    c' = f * c + i * g;  h' = o * tanh(c')

Dropout is inverted (kept units scaled by 1/(1-p)) and only active in
training. Gradients come from exact backpropagation through time; the fixed
embedding block never receives a gradient.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.configs import GeneratorConfig
from models.reports import TrainingHistory
from utils import checkpoint_io
from utils.errors import (
    AllPositionsMasked,
    BadTemperature,
    CheckpointError,
    EmptyCorpus,
    InvalidSmiles,
    NonFiniteActivation,
    ShapeMismatch,
    StaleCache,
)
from utils.logger import get_logger
from utils.logging_config import log_performance
from utils.rng import generator_state, restore_generator, stage_rng, stage_seed

from .embeddings import (
    BOS,
    EOS,
    PAD,
    HybridEmbedding,
    Vocabulary,
    apply_embedding_gradient,
    build_embedding,
    build_vocabulary,
)
from .optim import AdamState, adam_step, adam_update, clip_by_global_norm
from .smiles_core import augment_dataset, is_valid, tokenize

logger = get_logger("seqmodel")

CHECKPOINT_KIND = "hemgen.generator"
CHECKPOINT_VERSION = 1


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------


@dataclass
class LstmParameters:
    """LSTM and decoder weights plus the hybrid embedding.

    ``weights`` keys: ``lstm{l}.W`` (4H x in), ``lstm{l}.U`` (4H x H),
    ``lstm{l}.b`` (4H), ``dec.W`` (V x H), ``dec.b`` (V). ``version`` is bumped
    on every optimizer update so caches from older forwards are rejected.
    """

    embedding: HybridEmbedding
    weights: Dict[str, np.ndarray]
    version: int = 0

    @property
    def layers(self) -> int:
        return sum(1 for k in self.weights if k.endswith(".U"))

    @property
    def hidden_size(self) -> int:
        return int(self.weights["lstm0.U"].shape[1])

    @property
    def vocab_size(self) -> int:
        return int(self.weights["dec.W"].shape[0])

    def bump(self) -> None:
        self.version += 1

    def tensors(self) -> Dict[str, np.ndarray]:
        out = {f"w.{k}": v for k, v in self.weights.items()}
        out["emb.E_t"] = self.embedding.E_t
        out["emb.E_f"] = self.embedding.E_f
        return out


def init_parameters(config: GeneratorConfig, embedding: HybridEmbedding, rng: np.random.Generator) -> LstmParameters:
    H = config.hidden_size
    bound = 1.0 / np.sqrt(H)
    weights: Dict[str, np.ndarray] = {}
    in_dim = embedding.d
    for layer in range(config.layers):
        weights[f"lstm{layer}.W"] = rng.uniform(-bound, bound, (4 * H, in_dim))
        weights[f"lstm{layer}.U"] = rng.uniform(-bound, bound, (4 * H, H))
        b = rng.uniform(-bound, bound, 4 * H)
        b[H : 2 * H] = 1.0  # forget gate
        weights[f"lstm{layer}.b"] = b
        in_dim = H
    weights["dec.W"] = rng.uniform(-bound, bound, (embedding.V, H))
    weights["dec.b"] = rng.uniform(-bound, bound, embedding.V)
    return LstmParameters(embedding=embedding, weights=weights)


# --------------------------------------------------------------------------
# forward / loss / backward
# --------------------------------------------------------------------------


@dataclass
class ForwardCache:
    ids: np.ndarray
    version: int
    mask_in: Optional[np.ndarray]
    mask_out: Optional[np.ndarray]
    layer_inputs: List[np.ndarray] = field(default_factory=list)
    gates: List[Dict[str, np.ndarray]] = field(default_factory=list)
    top: Optional[np.ndarray] = None  # dropped-out output of the last layer


def _lstm_step(W, U, b, x, h, c):
    H = h.shape[1]
    a = x @ W.T + h @ U.T + b
    i = _sigmoid(a[:, :H])
    f = _sigmoid(a[:, H : 2 * H])
    g = np.tanh(a[:, 2 * H : 3 * H])
    o = _sigmoid(a[:, 3 * H :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return i, f, g, o, c_new, tc, o * tc


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def forward(
    params: LstmParameters,
    batch: np.ndarray,
    dropout_on: bool = False,
    seed: Optional[int] = None,
    dropout: float = 0.0,
) -> Tuple[np.ndarray, ForwardCache]:
    """Logits (B x T x V) for a padded id matrix (B x T)."""
    ids = np.asarray(batch, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeMismatch(f"Batch must be 2-D (batch x time), got shape {ids.shape}")
    emb = params.embedding
    if ids.size and (ids.min() < 0 or ids.max() >= emb.V):
        raise ShapeMismatch(f"Token id outside [0, {emb.V})")
    B, T = ids.shape

    x = np.concatenate([emb.E_t[ids], emb.E_f[ids]], axis=-1)
    use_dropout = dropout_on and dropout > 0.0
    rng = np.random.default_rng(seed) if use_dropout else None
    mask_in = _dropout_mask(rng, x.shape, dropout) if use_dropout else None
    if mask_in is not None:
        x = x * mask_in

    cache = ForwardCache(ids=ids, version=params.version, mask_in=mask_in, mask_out=None)
    layer_in = x
    for layer in range(params.layers):
        W = params.weights[f"lstm{layer}.W"]
        U = params.weights[f"lstm{layer}.U"]
        b = params.weights[f"lstm{layer}.b"]
        H = U.shape[1]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        store = {k: np.zeros((B, T, H)) for k in ("i", "f", "g", "o", "c", "tc", "h")}
        for t in range(T):
            i, f, g, o, c, tc, h = _lstm_step(W, U, b, layer_in[:, t], h, c)
            for key, val in (("i", i), ("f", f), ("g", g), ("o", o), ("c", c), ("tc", tc), ("h", h)):
                store[key][:, t] = val
        cache.layer_inputs.append(layer_in)
        cache.gates.append(store)
        layer_in = store["h"]

    top = layer_in
    if use_dropout:
        cache.mask_out = _dropout_mask(rng, top.shape, dropout)
        top = top * cache.mask_out
    cache.top = top
    logits = top @ params.weights["dec.W"].T + params.weights["dec.b"]
    if not np.all(np.isfinite(logits)):
        raise NonFiniteActivation("Non-finite logits in generator forward pass")
    return logits, cache


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss(logits: np.ndarray, targets: np.ndarray, pad_mask: np.ndarray) -> float:
    """Mean negative log-likelihood (nats/token) over unmasked positions.

    ``pad_mask`` is True where the target counts.
    """
    mask = np.asarray(pad_mask, dtype=bool)
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise ShapeMismatch(f"logits {logits.shape}, targets {targets.shape}, mask {mask.shape} disagree")
    count = int(mask.sum())
    if count == 0:
        raise AllPositionsMasked("Every target position is masked")
    logp = _log_softmax(logits)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    return float(-(picked * mask).sum() / count)


def loss_gradient(logits: np.ndarray, targets: np.ndarray, pad_mask: np.ndarray) -> np.ndarray:
    """d loss / d logits for :func:`loss`."""
    mask = np.asarray(pad_mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise AllPositionsMasked("Every target position is masked")
    probs = np.exp(_log_softmax(logits))
    np.put_along_axis(probs, targets[..., None], np.take_along_axis(probs, targets[..., None], -1) - 1.0, -1)
    return probs * (mask[..., None] / count)


def backward(params: LstmParameters, cache: ForwardCache, d_logits: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients for every weight plus ``emb`` (V x d, fixed columns zero)."""
    if cache.version != params.version:
        raise StaleCache(
            f"Cache from parameter version {cache.version}, parameters are at {params.version}"
        )
    grads: Dict[str, np.ndarray] = {}
    grads["dec.W"] = np.einsum("btv,bth->vh", d_logits, cache.top)
    grads["dec.b"] = d_logits.sum(axis=(0, 1))
    d_h_out = d_logits @ params.weights["dec.W"]
    if cache.mask_out is not None:
        d_h_out = d_h_out * cache.mask_out

    for layer in reversed(range(params.layers)):
        W = params.weights[f"lstm{layer}.W"]
        U = params.weights[f"lstm{layer}.U"]
        s = cache.gates[layer]
        x = cache.layer_inputs[layer]
        B, T, H = s["h"].shape
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros(4 * H)
        dx = np.zeros_like(x)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            i, f, g, o, tc = s["i"][:, t], s["f"][:, t], s["g"][:, t], s["o"][:, t], s["tc"][:, t]
            c_prev = s["c"][:, t - 1] if t > 0 else np.zeros((B, H))
            h_prev = s["h"][:, t - 1] if t > 0 else np.zeros((B, H))
            dh = d_h_out[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dc_next = dc * f
            dW += da.T @ x[:, t]
            dU += da.T @ h_prev
            db += da.sum(axis=0)
            dx[:, t] = da @ W
            dh_next = da @ U
        grads[f"lstm{layer}.W"] = dW
        grads[f"lstm{layer}.U"] = dU
        grads[f"lstm{layer}.b"] = db
        d_h_out = dx

    d_emb_in = d_h_out if cache.mask_in is None else d_h_out * cache.mask_in
    emb = params.embedding
    d_emb = np.zeros((emb.V, emb.d))
    np.add.at(d_emb, cache.ids.reshape(-1), d_emb_in.reshape(-1, emb.d))
    d_emb[:, emb.d_t :] = 0.0
    grads["emb"] = d_emb
    return grads


# --------------------------------------------------------------------------
# batching
# --------------------------------------------------------------------------


def pad_batch(sequences: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inputs, targets and target mask for BOS..EOS sequences, padded to the longest."""
    T = max(len(s) for s in sequences) - 1
    B = len(sequences)
    inputs = np.full((B, T), PAD, dtype=np.int64)
    targets = np.full((B, T), PAD, dtype=np.int64)
    for row, seq in enumerate(sequences):
        n = len(seq) - 1
        inputs[row, :n] = seq[:-1]
        targets[row, :n] = seq[1:]
    return inputs, targets, targets != PAD


def _mean_loss(params: LstmParameters, sequences: Sequence[np.ndarray], batch_size: int) -> float:
    total, tokens = 0.0, 0
    for start in range(0, len(sequences), batch_size):
        inputs, targets, mask = pad_batch(sequences[start : start + batch_size])
        logits, _ = forward(params, inputs)
        n = int(mask.sum())
        total += loss(logits, targets, mask) * n
        tokens += n
    return total / tokens


def train_step(
    params: LstmParameters,
    state: AdamState,
    inputs: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    lr: float,
    dropout: float = 0.0,
    seed: Optional[int] = None,
    clip_norm: Optional[float] = 5.0,
) -> float:
    """One forward/backward/Adam update; returns the batch loss before the update."""
    logits, cache = forward(params, inputs, dropout_on=dropout > 0.0, seed=seed, dropout=dropout)
    value = loss(logits, targets, mask)
    grads = backward(params, cache, loss_gradient(logits, targets, mask))

    emb = params.embedding
    emb_grad = grads.pop("emb")
    grads["emb_t"] = emb_grad[:, : emb.d_t]
    grads = clip_by_global_norm(grads, clip_norm)
    g_t = grads.pop("emb_t")

    adam_step(params.weights, grads, state, lr, clip_norm=None)
    full = np.zeros_like(emb_grad)
    full[:, : emb.d_t] = g_t
    apply_embedding_gradient(emb, full, lambda E_t, G_t: adam_update(state, "emb_t", E_t, G_t, lr))
    params.bump()
    return value


# --------------------------------------------------------------------------
# checkpoint
# --------------------------------------------------------------------------


@dataclass
class GeneratorCheckpoint:
    config: GeneratorConfig
    vocab: Vocabulary
    params: LstmParameters
    adam: AdamState
    rng_state: Dict[str, dict]  # shuffle and dropout streams, for resuming
    version: int = CHECKPOINT_VERSION

    def to_bytes(self) -> bytes:
        meta = {
            "version": self.version,
            "config": self.config.model_dump(mode="json"),
            "vocab": self.vocab.to_dict(),
            "embedding_mode": self.params.embedding.mode.value,
            "adam_t": self.adam.t,
            "rng": self.rng_state,
        }
        tensors = self.params.tensors()
        tensors.update(self.adam.tensors())
        return checkpoint_io.encode(CHECKPOINT_KIND, meta, tensors)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.info(f"Saved generator checkpoint to {path}")
        return path

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GeneratorCheckpoint":
        meta, tensors = checkpoint_io.decode(blob, CHECKPOINT_KIND)
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"Generator checkpoint version {meta.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
            )
        try:
            config = GeneratorConfig(**meta["config"])
            vocab = Vocabulary.from_dict(meta["vocab"])
            embedding = HybridEmbedding(
                E_t=tensors["emb.E_t"], E_f=tensors["emb.E_f"], mode=meta["embedding_mode"]
            )
            weights = {k[2:]: v for k, v in tensors.items() if k.startswith("w.")}
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"Incomplete generator checkpoint: {e}") from e
        params = LstmParameters(embedding=embedding, weights=weights)
        adam = AdamState.from_tensors(tensors, t=int(meta["adam_t"]))
        return cls(config=config, vocab=vocab, params=params, adam=adam, rng_state=meta["rng"])

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GeneratorCheckpoint":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"Checkpoint not found: {path}")
        return cls.from_bytes(path.read_bytes())


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def split_corpus(corpus: Sequence[str], val_fraction: float, seed: int) -> Tuple[List[str], List[str]]:
    """Molecule-level split; the validation part never sees augmentation."""
    n = len(corpus)
    n_val = int(round(val_fraction * n)) if n >= 2 else 0
    n_val = min(n_val, n - 1)
    order = stage_rng(seed, "generator.split").permutation(n)
    val_idx = set(int(i) for i in order[:n_val])
    train = [s for i, s in enumerate(corpus) if i not in val_idx]
    val = [s for i, s in enumerate(corpus) if i in val_idx]
    return train, val


# Fields that fix the data split, vocabulary and tensor shapes
RESUME_FIELDS = ("hidden_size", "layers", "d", "d_t", "embedding_mode", "key_mode", "unit_norm",
                 "val_fraction", "augment_factor", "seed")


def _check_resumable(config: GeneratorConfig, vocab: Vocabulary, resume: GeneratorCheckpoint) -> None:
    changed = [name for name in RESUME_FIELDS if getattr(config, name) != getattr(resume.config, name)]
    if changed:
        logger.error(
            "Cannot resume generator training",
            extra={"extra_fields": {"error_type": "CheckpointError", "changed": changed}},
        )
        raise CheckpointError(f"Checkpoint was trained with different {', '.join(changed)}")
    if vocab.to_dict() != resume.vocab.to_dict():
        logger.error(
            "Cannot resume generator training",
            extra={"extra_fields": {"error_type": "CheckpointError", "vocab_size": len(vocab)}},
        )
        raise CheckpointError("Corpus vocabulary differs from the checkpoint's")


def train(
    config: GeneratorConfig,
    corpus: Sequence[str],
    val_fraction: Optional[float] = None,
    resume: Optional[GeneratorCheckpoint] = None,
) -> Tuple[GeneratorCheckpoint, TrainingHistory]:
    """Train for ``config.epochs`` epochs, or that many more when ``resume`` is given.

    Resuming continues the weights, Adam moments and shuffle/dropout streams of
    the checkpoint, so N epochs plus M resumed epochs equal N + M epochs in one go.
    """
    if not corpus:
        raise EmptyCorpus("Generator training corpus is empty")
    for index, s in enumerate(corpus):
        if not is_valid(s):
            raise InvalidSmiles(index, s)
    if val_fraction is None:
        val_fraction = config.val_fraction
    seed = config.seed

    train_smiles, val_smiles = split_corpus(corpus, val_fraction, seed)
    if config.augment_factor > 1:
        train_smiles = augment_dataset(train_smiles, config.augment_factor, stage_seed(seed, "generator.augment"))

    train_tokens = [tokenize(s) for s in train_smiles]
    val_tokens = [tokenize(s) for s in val_smiles]
    vocab = build_vocabulary(train_tokens + val_tokens)
    train_ids = [vocab.encode(t) for t in train_tokens]
    val_ids = [vocab.encode(t) for t in val_tokens]

    embedding = build_embedding(
        vocab,
        d=config.d,
        d_t=config.d_t,
        mode=config.embedding_mode,
        seed=stage_seed(seed, "generator.embedding"),
        key_mode=config.key_mode,
        unit_norm=config.unit_norm,
    )
    if resume is None:
        params = init_parameters(config, embedding, stage_rng(seed, "generator.init"))
        state = AdamState()
        shuffle_rng = stage_rng(seed, "generator.shuffle")
        dropout_rng = stage_rng(seed, "generator.dropout")
    else:
        _check_resumable(config, vocab, resume)
        resume = GeneratorCheckpoint.from_bytes(resume.to_bytes())
        params, state = resume.params, resume.adam
        shuffle_rng = restore_generator(resume.rng_state["shuffle"])
        dropout_rng = restore_generator(resume.rng_state["dropout"])
    history = TrainingHistory()

    logger.info(
        f"Training generator ({config.embedding_mode}) on {len(train_ids)} sequences",
        extra={
            "extra_fields": {
                "train_sequences": len(train_ids),
                "val_molecules": len(val_ids),
                "vocab_size": len(vocab),
                "d_t": embedding.d_t,
                "d_f": embedding.d_f,
                "epochs": config.epochs,
            }
        },
    )

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(train_ids))
        total, tokens = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_ids[int(i)] for i in order[start : start + config.batch_size]]
            inputs, targets, mask = pad_batch(batch)
            n = int(mask.sum())
            value = train_step(
                params,
                state,
                inputs,
                targets,
                mask,
                lr=config.learning_rate,
                dropout=config.dropout,
                seed=int(dropout_rng.integers(2**63)),
                clip_norm=config.grad_clip,
            )
            total += value * n
            tokens += n
        history.train_loss.append(total / tokens)
        history.val_loss.append(_mean_loss(params, val_ids, config.batch_size) if val_ids else None)
        elapsed = time.perf_counter() - started
        history.wall_time.append(elapsed)
        logger.debug(
            f"epoch {epoch + 1}/{config.epochs} train={history.train_loss[-1]:.4f}",
            extra={"extra_fields": {"epoch": epoch + 1, "train_loss": history.train_loss[-1],
                                    "val_loss": history.val_loss[-1]}},
        )

    log_performance(logger, "generator.train", sum(history.wall_time), {"epochs": config.epochs})
    checkpoint = GeneratorCheckpoint(
        config=config,
        vocab=vocab,
        params=params,
        adam=state,
        rng_state={"shuffle": generator_state(shuffle_rng), "dropout": generator_state(dropout_rng)},
    )
    return checkpoint, history


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def sample(
    checkpoint: GeneratorCheckpoint,
    n: int,
    temperature: float = 1.0,
    seed: int = 0,
    greedy: bool = False,
    max_length: Optional[int] = None,
) -> List[str]:
    """Autoregressive sampling from BOS until EOS or ``max_length`` tokens.

    PAD and BOS are never emitted. ``greedy`` takes the argmax at every step.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not greedy and not (temperature > 0.0 and np.isfinite(temperature)):
        raise BadTemperature(f"Temperature must be a positive finite number, got {temperature}")
    params = checkpoint.params
    emb = params.embedding
    max_length = max_length or checkpoint.config.max_sample_length
    rng = np.random.default_rng(seed)

    table = emb.matrix()
    h = [np.zeros((n, params.hidden_size)) for _ in range(params.layers)]
    c = [np.zeros((n, params.hidden_size)) for _ in range(params.layers)]
    token = np.full(n, BOS, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    out = np.full((n, max_length), PAD, dtype=np.int64)

    for step in range(max_length):
        x = table[token]
        for layer in range(params.layers):
            *_, c[layer], _, h[layer] = _lstm_step(
                params.weights[f"lstm{layer}.W"],
                params.weights[f"lstm{layer}.U"],
                params.weights[f"lstm{layer}.b"],
                x,
                h[layer],
                c[layer],
            )
            x = h[layer]
        logits = x @ params.weights["dec.W"].T + params.weights["dec.b"]
        logits[:, PAD] = -np.inf
        logits[:, BOS] = -np.inf
        if greedy:
            token = logits.argmax(axis=1)
        else:
            probs = np.exp(_log_softmax(logits / temperature))
            cdf = np.cumsum(probs, axis=1)
            u = rng.random(n)[:, None] * cdf[:, -1:]
            token = np.minimum((cdf <= u).sum(axis=1), logits.shape[1] - 1)
        token = np.where(done, PAD, token)
        out[:, step] = token
        done |= token == EOS
        if done.all():
            break

    return [checkpoint.vocab.decode(row) for row in out]

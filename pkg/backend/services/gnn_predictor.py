"""
Attentive message-passing regressor for the nine dataset targets.

Featurization
    node (27): element one-hot over H B C N O F Si P S Cl Se Br I (13),
               degree one-hot 0-5 (6, clipped), formal charge (1),
               aromatic flag (1), H count one-hot 0-4 (5, clipped), ring flag (1)
    edge (5):  bond order one-hot single/double/triple/aromatic (4), ring flag (1)
    Every bond is stored as two directed edges.

Network (hidden width H)
    h = leaky(W_in x + b_in)
    layer 0 messages   m_uv = leaky(W_e [h_u | e_uv] + b_e)
    layer l > 0        m_uv = h_u
    each layer         h_v = GRU(sum_u alpha_uv W m_uv + b, h_v),
                       alpha = softmax over v's in-edges of leaky(a . [h_v | m_uv] + c)
    readout            g = sum_v h_v, then ``readout_steps`` times
                       g = GRU(sum_v beta_v W h_v + b, g) with beta the same
                       attention over all atoms of the graph (all components)
    output             y = W_out g + b_out  (standardized targets)
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.configs import PredictorConfig
from models.records import TARGETS, MoleculeRecord
from models.reports import PredictorHistory, TargetMetrics
from utils import checkpoint_io
from utils.errors import (
    CheckpointError,
    DegenerateTarget,
    EmptyGraph,
    InvalidSmiles,
    LengthMismatch,
    PredictorError,
    UnsupportedElement,
    ZeroVariance,
)
from utils.logger import get_logger
from utils.logging_config import log_performance
from utils.rng import permutation, stage_rng

from .graph_ops import (
    AttentionCache,
    attend_backward,
    attend_forward,
    init_attention,
    leaky_relu,
    leaky_relu_grad,
    segment_sum,
)
from .optim import AdamState, adam_step
from .smiles_core import BondOrder, MolGraph, is_valid, parse

logger = get_logger("gnn_predictor")

ELEMENTS = ("H", "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Se", "Br", "I")
MAX_DEGREE = 5
MAX_HYDROGENS = 4
NODE_FEATURES = len(ELEMENTS) + (MAX_DEGREE + 1) + 1 + 1 + (MAX_HYDROGENS + 1) + 1
EDGE_FEATURES = 5
_BOND_SLOT = {BondOrder.SINGLE: 0, BondOrder.DOUBLE: 1, BondOrder.TRIPLE: 2, BondOrder.AROMATIC: 3}
H50_COLUMN = TARGETS.index("h50(obs)")

CHECKPOINT_KIND = "hemgen.predictor"
CHECKPOINT_VERSION = 1


# --------------------------------------------------------------------------
# featurization
# --------------------------------------------------------------------------


@dataclass
class GraphTensors:
    x: np.ndarray  # N x NODE_FEATURES
    edge_index: np.ndarray  # 2 x E (src, dst), both directions of every bond
    edge_attr: np.ndarray  # E x EDGE_FEATURES
    graph_id: np.ndarray  # N
    n_graphs: int = 1

    @property
    def n_nodes(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edge_index.shape[1])


def featurize(g: MolGraph) -> GraphTensors:
    n = len(g.atoms)
    x = np.zeros((n, NODE_FEATURES))
    ring_atoms = g.ring_atoms
    for i, atom in enumerate(g.atoms):
        if atom.symbol not in ELEMENTS:
            raise UnsupportedElement(f"Element {atom.symbol!r} is not featurized")
        col = ELEMENTS.index(atom.symbol)
        x[i, col] = 1.0
        col = len(ELEMENTS)
        x[i, col + min(g.degree(i), MAX_DEGREE)] = 1.0
        col += MAX_DEGREE + 1
        x[i, col] = float(atom.charge)
        x[i, col + 1] = float(atom.aromatic)
        col += 2
        x[i, col + min(atom.hydrogens, MAX_HYDROGENS)] = 1.0
        col += MAX_HYDROGENS + 1
        x[i, col] = float(i in ring_atoms)

    src, dst, attrs = [], [], []
    ring_bonds = g.ring_bonds
    for k, bond in enumerate(g.bonds):
        feat = np.zeros(EDGE_FEATURES)
        feat[_BOND_SLOT[bond.order]] = 1.0
        feat[4] = float(k in ring_bonds)
        for a, b in ((bond.a, bond.b), (bond.b, bond.a)):
            src.append(a)
            dst.append(b)
            attrs.append(feat)
    edge_index = np.array([src, dst], dtype=np.int64).reshape(2, len(src))
    edge_attr = np.array(attrs).reshape(len(attrs), EDGE_FEATURES)
    return GraphTensors(x=x, edge_index=edge_index, edge_attr=edge_attr, graph_id=np.zeros(n, dtype=np.int64))


def batch_graphs(graphs: Sequence[GraphTensors]) -> GraphTensors:
    xs, edges, attrs, ids = [], [], [], []
    offset = 0
    for gid, gt in enumerate(graphs):
        xs.append(gt.x)
        edges.append(gt.edge_index + offset)
        attrs.append(gt.edge_attr)
        ids.append(np.full(gt.n_nodes, gid, dtype=np.int64))
        offset += gt.n_nodes
    return GraphTensors(
        x=np.concatenate(xs) if xs else np.zeros((0, NODE_FEATURES)),
        edge_index=np.concatenate(edges, axis=1) if edges else np.zeros((2, 0), dtype=np.int64),
        edge_attr=np.concatenate(attrs) if attrs else np.zeros((0, EDGE_FEATURES)),
        graph_id=np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64),
        n_graphs=len(graphs),
    )


# --------------------------------------------------------------------------
# parameters / forward / backward
# --------------------------------------------------------------------------


def init_params(config: PredictorConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    H = config.hidden

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape)

    params = {
        "in.W": uniform((H, NODE_FEATURES), NODE_FEATURES),
        "in.b": uniform(H, NODE_FEATURES),
        "edge.W": uniform((H, H + EDGE_FEATURES), H + EDGE_FEATURES),
        "edge.b": uniform(H, H + EDGE_FEATURES),
    }
    for layer in range(config.layers):
        params.update(init_attention(rng, f"layer{layer}", H))
    params.update(init_attention(rng, "readout", H))
    params["out.W"] = uniform((config.outputs, H), H)
    params["out.b"] = uniform(config.outputs, H)
    return params


@dataclass
class PredictorCache:
    graph: GraphTensors
    pre_in: np.ndarray
    pre_edge: np.ndarray
    edge_joint: np.ndarray
    layers: List[AttentionCache] = field(default_factory=list)
    readout: List[AttentionCache] = field(default_factory=list)
    node_state: Optional[np.ndarray] = None
    graph_state: Optional[np.ndarray] = None

    def attention_weights(self) -> Dict[str, List[np.ndarray]]:
        """Per-layer edge attention and per-step readout attention."""
        return {
            "layers": [c.alpha for c in self.layers],
            "readout": [c.alpha for c in self.readout],
        }


def _layer_count(params: Dict[str, np.ndarray]) -> int:
    return sum(1 for k in params if k.startswith("layer") and k.endswith(".a"))


def predict(
    params: Dict[str, np.ndarray], graph: GraphTensors, readout_steps: int = 3
) -> Tuple[np.ndarray, PredictorCache]:
    """Standardized predictions (n_graphs x outputs) and the cache for backward."""
    if graph.n_nodes == 0:
        raise EmptyGraph("Cannot predict on a graph without atoms")
    src, dst = graph.edge_index
    pre_in = graph.x @ params["in.W"].T + params["in.b"]
    h = leaky_relu(pre_in)

    edge_joint = np.concatenate([h[src], graph.edge_attr], axis=1)
    pre_edge = edge_joint @ params["edge.W"].T + params["edge.b"]
    messages = leaky_relu(pre_edge)

    cache = PredictorCache(graph=graph, pre_in=pre_in, pre_edge=pre_edge, edge_joint=edge_joint)
    for layer in range(_layer_count(params)):
        values = messages if layer == 0 else h[src]
        h, c = attend_forward(params, f"layer{layer}", h, values, dst)
        cache.layers.append(c)

    cache.node_state = h
    g = segment_sum(h, graph.graph_id, graph.n_graphs)
    for _ in range(readout_steps):
        g, c = attend_forward(params, "readout", g, h, graph.graph_id)
        cache.readout.append(c)
    cache.graph_state = g
    return g @ params["out.W"].T + params["out.b"], cache


def backward(params: Dict[str, np.ndarray], cache: PredictorCache, d_out: np.ndarray) -> Dict[str, np.ndarray]:
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    graph = cache.graph
    src, dst = graph.edge_index

    grads["out.W"] += d_out.T @ cache.graph_state
    grads["out.b"] += d_out.sum(axis=0)
    d_g = d_out @ params["out.W"]

    d_h = np.zeros_like(cache.node_state)
    for c in reversed(cache.readout):
        d_g, d_vals = attend_backward(params, "readout", c, d_g, grads)
        d_h += d_vals
    d_h += d_g[graph.graph_id]

    for layer in reversed(range(len(cache.layers))):
        c = cache.layers[layer]
        d_h_prev, d_vals = attend_backward(params, f"layer{layer}", c, d_h, grads)
        if layer == 0:
            d_pre_edge = d_vals * leaky_relu_grad(cache.pre_edge)
            grads["edge.W"] += d_pre_edge.T @ cache.edge_joint
            grads["edge.b"] += d_pre_edge.sum(axis=0)
            d_joint = d_pre_edge @ params["edge.W"]
            np.add.at(d_h_prev, src, d_joint[:, : d_h_prev.shape[1]])
        else:
            np.add.at(d_h_prev, src, d_vals)
        d_h = d_h_prev

    d_pre_in = d_h * leaky_relu_grad(cache.pre_in)
    grads["in.W"] += d_pre_in.T @ graph.x
    grads["in.b"] += d_pre_in.sum(axis=0)
    return grads


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


# --------------------------------------------------------------------------
# scaling / metrics
# --------------------------------------------------------------------------


@dataclass
class TargetScaler:
    mean: np.ndarray
    std: np.ndarray
    log_h50: bool = True

    @classmethod
    def fit(cls, y: np.ndarray, log_h50: bool = True) -> "TargetScaler":
        y = _to_model_space(y, log_h50)
        mean = y.mean(axis=0)
        std = y.std(axis=0)
        for j, s in enumerate(std):
            if not s > 0.0:
                raise DegenerateTarget(TARGETS[j] if j < len(TARGETS) else str(j))
        return cls(mean=mean, std=std, log_h50=log_h50)

    def transform(self, y: np.ndarray) -> np.ndarray:
        return (_to_model_space(y, self.log_h50) - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        y = z * self.std + self.mean
        if self.log_h50:
            y = y.copy()
            y[:, H50_COLUMN] = 10.0 ** y[:, H50_COLUMN]
        return y


def _to_model_space(y: np.ndarray, log_h50: bool) -> np.ndarray:
    y = np.array(y, dtype=np.float64)
    if log_h50:
        if np.any(y[:, H50_COLUMN] <= 0.0):
            raise PredictorError("h50(obs) must be positive for log10 scaling")
        y[:, H50_COLUMN] = np.log10(y[:, H50_COLUMN])
    return y


def regression_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> Dict[str, TargetMetrics]:
    """R2, MAE and RMSE per target column."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.ndim == 1:
        y_true = y_true[:, None]
    if y_pred.ndim == 1:
        y_pred = y_pred[:, None]
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"y_true {y_true.shape} and y_pred {y_pred.shape} differ")
    if y_true.shape[0] < 2:
        raise LengthMismatch("Regression metrics need at least two samples")
    names = TARGETS if y_true.shape[1] == len(TARGETS) else tuple(str(j) for j in range(y_true.shape[1]))
    out = {}
    for j, name in enumerate(names):
        t, p = y_true[:, j], y_pred[:, j]
        ss_tot = float(np.sum((t - t.mean()) ** 2))
        if ss_tot == 0.0:
            raise ZeroVariance(f"Target {name!r} has zero variance; R2 undefined")
        resid = t - p
        out[name] = TargetMetrics(
            r2=1.0 - float(np.sum(resid**2)) / ss_tot,
            mae=float(np.mean(np.abs(resid))),
            rmse=float(np.sqrt(np.mean(resid**2))),
        )
    return out


# --------------------------------------------------------------------------
# checkpoint
# --------------------------------------------------------------------------


@dataclass
class PredictorCheckpoint:
    config: PredictorConfig
    params: Dict[str, np.ndarray]
    scaler: TargetScaler
    adam: AdamState
    train_index: List[int] = field(default_factory=list)
    test_index: List[int] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": self.config.model_dump(mode="json"),
            "adam_t": self.adam.t,
            "log_h50": self.scaler.log_h50,
            "train_index": self.train_index,
            "test_index": self.test_index,
        }
        tensors = {f"w.{k}": v for k, v in self.params.items()}
        tensors["scaler.mean"] = self.scaler.mean
        tensors["scaler.std"] = self.scaler.std
        tensors.update(self.adam.tensors())
        return checkpoint_io.encode(CHECKPOINT_KIND, meta, tensors)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.info(f"Saved predictor checkpoint to {path}")
        return path

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PredictorCheckpoint":
        meta, tensors = checkpoint_io.decode(blob, CHECKPOINT_KIND)
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"Predictor checkpoint version {meta.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
            )
        try:
            config = PredictorConfig(**meta["config"])
            scaler = TargetScaler(tensors["scaler.mean"], tensors["scaler.std"], bool(meta["log_h50"]))
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"Incomplete predictor checkpoint: {e}") from e
        params = {k[2:]: v for k, v in tensors.items() if k.startswith("w.")}
        return cls(
            config=config,
            params=params,
            scaler=scaler,
            adam=AdamState.from_tensors(tensors, t=int(meta["adam_t"])),
            train_index=list(meta["train_index"]),
            test_index=list(meta["test_index"]),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PredictorCheckpoint":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"Checkpoint not found: {path}")
        return cls.from_bytes(path.read_bytes())


# --------------------------------------------------------------------------
# training / inference
# --------------------------------------------------------------------------


def _standardized_predictions(params, graphs: Sequence[GraphTensors], readout_steps: int, batch_size: int) -> np.ndarray:
    out = []
    for start in range(0, len(graphs), batch_size):
        pred, _ = predict(params, batch_graphs(graphs[start : start + batch_size]), readout_steps)
        out.append(pred)
    return np.concatenate(out)


def _rmse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def usable_records(dataset: Sequence[MoleculeRecord]) -> List[MoleculeRecord]:
    kept = [r for r in dataset if r.has_all_targets]
    skipped = len(dataset) - len(kept)
    if skipped:
        logger.warning(
            f"Skipping {skipped} records with missing targets",
            extra={"extra_fields": {"skipped": skipped, "kept": len(kept)}},
        )
    return kept


def train_predictor(
    config: PredictorConfig,
    dataset: Sequence[MoleculeRecord],
    split_seed: Optional[int] = None,
) -> Tuple[PredictorCheckpoint, PredictorHistory]:
    records = usable_records(dataset)
    if len(records) < 2:
        raise PredictorError(f"Need at least 2 complete records to train, got {len(records)}")
    graphs = []
    for index, record in enumerate(records):
        if not is_valid(record.smiles):
            raise InvalidSmiles(index, record.smiles)
        graphs.append(featurize(parse(record.smiles)))
    y = np.stack([r.property_vector() for r in records])

    split_seed = config.seed if split_seed is None else split_seed
    order = permutation(stage_rng(split_seed, "predictor.split"), len(records))
    n_test = min(int(round(config.test_fraction * len(records))), len(records) - 1)
    test_index, train_index = sorted(order[:n_test]), sorted(order[n_test:])

    scaler = TargetScaler.fit(y[train_index], log_h50=config.log_h50)
    z = scaler.transform(y)
    train_graphs = [graphs[i] for i in train_index]
    test_graphs = [graphs[i] for i in test_index]

    params = init_params(config, stage_rng(config.seed, "predictor.init"))
    state = AdamState()
    shuffle_rng = stage_rng(config.seed, "predictor.shuffle")
    history = PredictorHistory()

    logger.info(
        f"Training predictor on {len(train_index)} molecules ({len(test_index)} held out)",
        extra={"extra_fields": {"train": len(train_index), "test": len(test_index), "epochs": config.epochs}},
    )
    for epoch in range(config.epochs):
        started = time.perf_counter()
        perm = shuffle_rng.permutation(len(train_index))
        for start in range(0, len(perm), config.batch_size):
            rows = [int(k) for k in perm[start : start + config.batch_size]]
            batch = batch_graphs([train_graphs[k] for k in rows])
            pred, cache = predict(params, batch, config.readout_steps)
            _, d_pred = mse_loss(pred, z[[train_index[k] for k in rows]])
            grads = backward(params, cache, d_pred)
            adam_step(params, grads, state, config.learning_rate, clip_norm=None, weight_decay=config.weight_decay)

        train_pred = _standardized_predictions(params, train_graphs, config.readout_steps, config.batch_size)
        history.train_rmse.append(_rmse(train_pred, z[train_index]))
        if test_graphs:
            test_pred = _standardized_predictions(params, test_graphs, config.readout_steps, config.batch_size)
            history.test_rmse.append(_rmse(test_pred, z[test_index]))
        else:
            history.test_rmse.append(None)
        history.wall_time.append(time.perf_counter() - started)

    log_performance(logger, "predictor.train", sum(history.wall_time), {"epochs": config.epochs})
    checkpoint = PredictorCheckpoint(
        config=config, params=params, scaler=scaler, adam=state,
        train_index=train_index, test_index=test_index,
    )
    return checkpoint, history


def predict_properties(checkpoint: PredictorCheckpoint, smiles: Sequence[str]) -> np.ndarray:
    """Predictions in original units (n x 9); invalid SMILES raise InvalidSmiles."""
    graphs = []
    for index, s in enumerate(smiles):
        if not is_valid(s):
            raise InvalidSmiles(index, s)
        graphs.append(featurize(parse(s)))
    if not graphs:
        return np.zeros((0, checkpoint.config.outputs))
    z = _standardized_predictions(checkpoint.params, graphs, checkpoint.config.readout_steps,
                                  checkpoint.config.batch_size)
    return checkpoint.scaler.inverse(z)


def evaluate_predictor(checkpoint: PredictorCheckpoint, records: Sequence[MoleculeRecord]) -> Dict[str, TargetMetrics]:
    """Regression metrics on standardized targets for the given records."""
    records = usable_records(records)
    y = np.stack([r.property_vector() for r in records])
    graphs = [featurize(parse(r.smiles)) for r in records]
    z_pred = _standardized_predictions(checkpoint.params, graphs, checkpoint.config.readout_steps,
                                       checkpoint.config.batch_size)
    return regression_metrics(checkpoint.scaler.transform(y), z_pred)

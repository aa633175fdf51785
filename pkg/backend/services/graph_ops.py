"""
Numpy building blocks for the attentive graph network, each with an exact
backward pass: leaky ReLU, segment softmax, GRU cell and the
attention-then-GRU block shared by message passing and readout.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

LEAKY_SLOPE = 0.01


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def segment_sum(values: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n,) + values.shape[1:])
    np.add.at(out, segments, values)
    return out


def segment_softmax(scores: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    """Softmax of ``scores`` within each segment id (max-shifted per segment)."""
    if scores.size == 0:
        return scores.copy()
    peak = np.full(n, -np.inf)
    np.maximum.at(peak, segments, scores)
    e = np.exp(scores - peak[segments])
    total = segment_sum(e, segments, n)
    return e / total[segments]


def segment_softmax_backward(alpha: np.ndarray, d_alpha: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    inner = segment_sum(alpha * d_alpha, segments, n)
    return alpha * (d_alpha - inner[segments])


# --------------------------------------------------------------------------
# GRU cell (PyTorch gate layout: r, z, n)
# --------------------------------------------------------------------------


@dataclass
class GruCache:
    x: np.ndarray
    h: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: np.ndarray
    ah_n: np.ndarray


def gru_forward(p: Dict[str, np.ndarray], prefix: str, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, GruCache]:
    """r = s(Wx_r x + Wh_r h), z = s(...), n = tanh(Wx_n x + r * (Wh_n h)), h' = (1-z) n + z h."""
    H = h.shape[1]
    ax = x @ p[f"{prefix}.Wx"].T + p[f"{prefix}.bx"]
    ah = h @ p[f"{prefix}.Wh"].T + p[f"{prefix}.bh"]
    r = sigmoid(ax[:, :H] + ah[:, :H])
    z = sigmoid(ax[:, H : 2 * H] + ah[:, H : 2 * H])
    ah_n = ah[:, 2 * H :]
    n = np.tanh(ax[:, 2 * H :] + r * ah_n)
    return (1.0 - z) * n + z * h, GruCache(x, h, r, z, n, ah_n)


def gru_backward(
    p: Dict[str, np.ndarray], prefix: str, cache: GruCache, d_out: np.ndarray, grads: Dict[str, np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    """Accumulates parameter gradients into ``grads``; returns (dx, dh)."""
    r, z, n = cache.r, cache.z, cache.n
    dn = d_out * (1.0 - z)
    dz = d_out * (cache.h - n)
    dh = d_out * z
    da_n = dn * (1.0 - n * n)
    dr = da_n * cache.ah_n
    da_r = dr * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)
    dax = np.concatenate([da_r, da_z, da_n], axis=1)
    dah = np.concatenate([da_r, da_z, da_n * r], axis=1)
    grads[f"{prefix}.Wx"] += dax.T @ cache.x
    grads[f"{prefix}.bx"] += dax.sum(axis=0)
    grads[f"{prefix}.Wh"] += dah.T @ cache.h
    grads[f"{prefix}.bh"] += dah.sum(axis=0)
    dx = dax @ p[f"{prefix}.Wx"]
    dh = dh + dah @ p[f"{prefix}.Wh"]
    return dx, dh


def init_gru(rng: np.random.Generator, prefix: str, in_dim: int, H: int) -> Dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(H)
    return {
        f"{prefix}.Wx": rng.uniform(-bound, bound, (3 * H, in_dim)),
        f"{prefix}.Wh": rng.uniform(-bound, bound, (3 * H, H)),
        f"{prefix}.bx": rng.uniform(-bound, bound, 3 * H),
        f"{prefix}.bh": rng.uniform(-bound, bound, 3 * H),
    }


# --------------------------------------------------------------------------
# attention + GRU block
# --------------------------------------------------------------------------


@dataclass
class AttentionCache:
    query: np.ndarray
    values: np.ndarray
    target: np.ndarray
    pre: np.ndarray
    alpha: np.ndarray
    transformed: np.ndarray
    gru: GruCache


def attend_forward(
    p: Dict[str, np.ndarray], prefix: str, query: np.ndarray, values: np.ndarray, target: np.ndarray
) -> Tuple[np.ndarray, AttentionCache]:
    """Attention of each query row over the value rows pointing at it, then a GRU update.

    score_k = leaky(a . [query[target_k] | values_k] + c), normalized per target;
    context = sum_k alpha_k (W values_k) + bW;  new query = GRU(context, query).
    """
    M = query.shape[0]
    joint = np.concatenate([query[target], values], axis=1)
    pre = joint @ p[f"{prefix}.a"] + p[f"{prefix}.c"][0]
    alpha = segment_softmax(leaky_relu(pre), target, M)
    transformed = values @ p[f"{prefix}.W"].T
    context = segment_sum(alpha[:, None] * transformed, target, M) + p[f"{prefix}.bW"]
    out, gru_cache = gru_forward(p, f"{prefix}.gru", context, query)
    return out, AttentionCache(query, values, target, pre, alpha, transformed, gru_cache)


def attend_backward(
    p: Dict[str, np.ndarray], prefix: str, cache: AttentionCache, d_out: np.ndarray, grads: Dict[str, np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (d_query, d_values) and accumulates parameter gradients."""
    H = cache.query.shape[1]
    M = cache.query.shape[0]
    d_context, d_query = gru_backward(p, f"{prefix}.gru", cache.gru, d_out, grads)

    grads[f"{prefix}.bW"] += d_context.sum(axis=0)
    d_ctx_k = d_context[cache.target]
    d_transformed = cache.alpha[:, None] * d_ctx_k
    d_alpha = np.sum(cache.transformed * d_ctx_k, axis=1)
    grads[f"{prefix}.W"] += d_transformed.T @ cache.values
    d_values = d_transformed @ p[f"{prefix}.W"]

    d_score = segment_softmax_backward(cache.alpha, d_alpha, cache.target, M)
    d_pre = d_score * leaky_relu_grad(cache.pre)
    joint = np.concatenate([cache.query[cache.target], cache.values], axis=1)
    grads[f"{prefix}.a"] += d_pre @ joint
    grads[f"{prefix}.c"] += d_pre.sum()
    np.add.at(d_query, cache.target, d_pre[:, None] * p[f"{prefix}.a"][:H])
    d_values = d_values + d_pre[:, None] * p[f"{prefix}.a"][H:]
    return d_query, d_values


def init_attention(rng: np.random.Generator, prefix: str, H: int) -> Dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(H)
    params = {
        f"{prefix}.a": rng.uniform(-bound, bound, 2 * H),
        f"{prefix}.c": rng.uniform(-bound, bound, 1),
        f"{prefix}.W": rng.uniform(-bound, bound, (H, H)),
        f"{prefix}.bW": rng.uniform(-bound, bound, H),
    }
    params.update(init_gru(rng, f"{prefix}.gru", H, H))
    return params

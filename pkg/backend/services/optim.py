"""
Adam with bias correction, optional decoupled weight decay and global-norm
gradient clipping. Parameters and gradients are dicts of float64 arrays keyed
by tensor name; the optimizer state keeps one (m, v) pair per name.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from utils.errors import ShapeMismatch

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def tensors(self) -> Dict[str, np.ndarray]:
        out = {f"adam.m.{k}": a for k, a in self.m.items()}
        out.update({f"adam.v.{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_tensors(cls, tensors: Mapping[str, np.ndarray], t: int) -> "AdamState":
        state = cls(t=t)
        for name, arr in tensors.items():
            if name.startswith("adam.m."):
                state.m[name[len("adam.m."):]] = arr.copy()
            elif name.startswith("adam.v."):
                state.v[name[len("adam.v."):]] = arr.copy()
        return state


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: Optional[float]) -> Dict[str, np.ndarray]:
    if max_norm is None:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def adam_update(
    state: AdamState,
    name: str,
    param: np.ndarray,
    grad: np.ndarray,
    lr: float,
    weight_decay: float = 0.0,
) -> np.ndarray:
    """One Adam update of a single tensor at step ``state.t`` (already advanced)."""
    if param.shape != grad.shape:
        raise ShapeMismatch(f"{name}: parameter {param.shape} vs gradient {grad.shape}")
    m = state.m.get(name)
    v = state.v.get(name)
    if m is None:
        m = np.zeros_like(param)
        v = np.zeros_like(param)
    elif m.shape != param.shape:
        raise ShapeMismatch(f"{name}: optimizer state {m.shape} vs parameter {param.shape}")
    m = BETA1 * m + (1.0 - BETA1) * grad
    v = BETA2 * v + (1.0 - BETA2) * grad * grad
    state.m[name], state.v[name] = m, v

    t = max(state.t, 1)
    m_hat = m / (1.0 - BETA1**t)
    v_hat = v / (1.0 - BETA2**t)
    updated = param - lr * m_hat / (np.sqrt(v_hat) + EPS)
    if weight_decay:
        updated = updated - lr * weight_decay * param
    return updated


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    clip_norm: Optional[float] = 5.0,
    weight_decay: float = 0.0,
    advance: bool = True,
) -> Dict[str, np.ndarray]:
    """Clip, advance the step counter and update every tensor in ``grads``."""
    missing = set(grads) - set(params)
    if missing:
        raise ShapeMismatch(f"Gradients for unknown parameters: {sorted(missing)}")
    grads = clip_by_global_norm(dict(grads), clip_norm)
    if advance:
        state.t += 1
    for name in sorted(grads):
        params[name] = adam_update(state, name, params[name], grads[name], lr, weight_decay)
    return params

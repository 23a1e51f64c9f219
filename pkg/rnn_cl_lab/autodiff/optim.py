"""Adam and global-norm gradient clipping over flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import NonFiniteError, ShapeError
from .params import ParamVector


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return cls(np.zeros(size), np.zeros(size), 0, lr, beta1, beta2, eps)

    def copy(self) -> "AdamState":
        return replace(self, m=self.m.copy(), v=self.v.copy())


def adam_step(
    params: ParamVector,
    grads: np.ndarray,
    state: AdamState,
    trainable: np.ndarray | None = None,
) -> tuple[ParamVector, AdamState]:
    """One bias-corrected Adam update.

    Entries outside ``trainable`` keep both their value and their moments.
    Returns new objects; the inputs are left untouched.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.entries.shape:
        raise ShapeError(f"gradient of shape {grads.shape} for {len(params)} parameters")
    bad = ~np.isfinite(grads)
    if bad.any():
        view = params.layout.view_at(int(np.flatnonzero(bad)[0]))
        raise NonFiniteError(f"non-finite gradient in view {view!r}", view=view)

    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    delta = -state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    if trainable is not None:
        delta = np.where(trainable, delta, 0.0)
        m = np.where(trainable, m, state.m)
        v = np.where(trainable, v, state.v)

    new_params = ParamVector(params.layout, params.entries + delta)
    return new_params, replace(state, m=m, v=v, t=t)


def clip_global_norm(grads: np.ndarray, max_norm: float) -> np.ndarray:
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = float(np.linalg.norm(grads))
    if norm <= max_norm:
        return grads
    return grads * (max_norm / norm)

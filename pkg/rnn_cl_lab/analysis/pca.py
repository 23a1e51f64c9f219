"""Intrinsic dimensionality of hidden states by PCA."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..models.rnn import HiddenTrace

_SLACK = 1e-12


def explained_variance(H: np.ndarray) -> np.ndarray:
    """Principal variances of the rows of ``H``, largest first."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 2:
        raise DataError(f"need at least two samples, got an array of shape {H.shape}")
    centered = H - H.mean(axis=0, keepdims=True)
    N, n = centered.shape
    if N < n:
        s = np.linalg.svd(centered, compute_uv=False)
        var = s**2 / (N - 1)
    else:
        var = np.linalg.eigvalsh(centered.T @ centered / (N - 1))[::-1]
    return np.clip(var, 0.0, None)


def pca_intrinsic_dim(H: np.ndarray, threshold: float = 0.75) -> int:
    """Smallest number of components whose cumulative variance ratio reaches ``threshold``.

    Constant activations have dimension 0.
    """
    var = explained_variance(H)
    total = var.sum()
    if total <= _SLACK**2:
        return 0
    ratio = np.cumsum(var) / total
    return int(np.searchsorted(ratio, threshold - _SLACK) + 1)


def intrinsic_dim_profile(trace: HiddenTrace | np.ndarray, threshold: float = 0.75) -> list[int]:
    """Intrinsic dimension at every timestep of a (T+1) x B x n_h hidden trace."""
    states = trace.states() if isinstance(trace, HiddenTrace) else np.asarray(trace)
    return [pca_intrinsic_dim(states[t], threshold) for t in range(states.shape[0])]

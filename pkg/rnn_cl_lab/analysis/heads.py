"""Similarity of the hidden subspaces that task heads read from."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..autodiff import ParamVector


def head_subspace(W: np.ndarray, threshold: float = 0.05) -> np.ndarray:
    """Orthonormal rows spanning the right-singular directions with sigma >= threshold * sigma_max."""
    _, s, Vt = np.linalg.svd(np.asarray(W, dtype=np.float64), full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return Vt[:0]
    return Vt[s >= threshold * s[0]]


def head_subspace_similarity(W_k: np.ndarray, W_l: np.ndarray, threshold: float = 0.05) -> float:
    """``||U_k U_l^T||_F`` of the two heads' retained subspaces."""
    U_k = head_subspace(W_k, threshold)
    U_l = head_subspace(W_l, threshold)
    return float(np.linalg.norm(U_k @ U_l.T))


def similarity_matrix(heads: Sequence[np.ndarray], threshold: float = 0.05) -> np.ndarray:
    K = len(heads)
    S = np.zeros((K, K))
    for k in range(K):
        for l in range(k, K):
            S[k, l] = S[l, k] = head_subspace_similarity(heads[k], heads[l], threshold)
    return S


def head_similarity_matrix(params: ParamVector, K: int, threshold: float = 0.05) -> np.ndarray:
    """Pairwise similarity of the K task heads; a single shared head is compared with itself."""
    single = "head.1.W" not in params.layout
    return similarity_matrix([params.view(f"head.{0 if single else k}.W") for k in range(K)], threshold)

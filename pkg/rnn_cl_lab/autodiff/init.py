"""Orthogonal initialization and the orthogonality penalty."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import tape
from .tape import Node


def orthogonal_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """(Semi-)orthogonal matrix from the QR decomposition of a Gaussian draw.

    Columns are orthonormal when rows >= cols, rows otherwise. The signs
    are fixed so that diag(R) > 0.
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"cannot build a {rows}x{cols} orthogonal matrix")
    tall = rows >= cols
    gauss = rng.standard_normal((rows, cols) if tall else (cols, rows))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    return q if tall else q.T


def orthogonal_reg(weight: Node, strength: float) -> Node:
    """``strength * ||W^T W - I||_F^2``."""
    weight = tape.constant(weight)
    if weight.value.ndim != 2 or weight.shape[0] != weight.shape[1]:
        raise ShapeError(f"orthogonal penalty needs a square matrix, got {weight.shape}")
    gram = tape.matmul(tape.transpose(weight), weight)
    residual = tape.sub(gram, np.eye(weight.shape[0]))
    return tape.scale(tape.sum(tape.square(residual)), float(strength))

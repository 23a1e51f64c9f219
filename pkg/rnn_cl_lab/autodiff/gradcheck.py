"""Central finite-difference check of tape gradients."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from ..errors import NonFiniteError
from . import tape
from .tape import Node

logger = logging.getLogger(__name__)


def finite_diff_check(
    f: Callable[[Node], Node],
    params: np.ndarray,
    step: float = 1e-5,
    indices: np.ndarray | None = None,
) -> float:
    """Max relative error between the tape gradient of ``f`` and central differences.

    ``f`` maps a parameter node to a scalar node. ``indices`` restricts
    the check to a subset of coordinates (all by default). The error of a
    coordinate is ``|g - g_fd| / max(1, |g|, |g_fd|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = np.asarray(params, dtype=np.float64).copy()
    x = tape.leaf(params, name="x")
    analytic = tape.backward(f(x), {"x": x})["x"].reshape(-1)
    if indices is None:
        indices = np.arange(params.size)

    def evaluate(point: np.ndarray) -> float:
        value = float(f(tape.constant(point)).value)
        if not np.isfinite(value):
            raise NonFiniteError(f"f evaluated to {value} during finite differences")
        return value

    worst = 0.0
    flat = params.reshape(-1)
    for i in np.asarray(indices, dtype=np.int64):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += step
        minus[i] -= step
        numeric = (evaluate(plus.reshape(params.shape)) - evaluate(minus.reshape(params.shape))) / (2.0 * step)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]), abs(numeric))
        worst = max(worst, err)
    logger.debug("finite-difference check over %d coordinates: max rel err %.3e", len(indices), worst)
    return worst

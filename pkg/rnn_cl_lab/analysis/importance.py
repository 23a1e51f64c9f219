from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..autodiff import ParamLayout
from ..errors import ShapeError


class ImportanceStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    view: str
    mean: float
    max: float
    counts: list[int]
    """Histogram bin counts; they sum to the view size."""

    edges: list[float]


def importance_stats(values: np.ndarray, layout: ParamLayout, view: str = "rnn.W_hh", bins: int = 20) -> ImportanceStats:
    """Mean, max and histogram of a per-parameter importance vector over one view."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (layout.size,):
        raise ShapeError(f"importance vector of shape {values.shape} for a layout of {layout.size} entries")
    if view not in layout:
        raise ShapeError(f"no parameter view named {view!r}")
    v = layout[view]
    restricted = values[v.offset : v.stop]
    counts, edges = np.histogram(restricted, bins=bins)
    return ImportanceStats(
        view=view,
        mean=float(restricted.mean()),
        max=float(restricted.max()),
        counts=counts.tolist(),
        edges=edges.tolist(),
    )


def fisher_stats(F: np.ndarray, layout: ParamLayout, view: str = "rnn.W_hh", bins: int = 20) -> ImportanceStats:
    """Statistics of a diagonal Fisher restricted to ``view``."""
    return importance_stats(F, layout, view, bins)

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field


class Failure(BaseModel):
    task_id: int
    iteration: int
    message: str


class RunRecord(BaseModel):
    method: str
    variant: str
    K: int
    p: int
    i: int
    r: int
    seed: int
    config_hash: str
    status: Literal["ok", "failed"] = "ok"
    accuracy: list[list[float | None]] = []
    """``accuracy[k][j]``: test accuracy of task k after training task j (None for j < k)."""

    failure: Failure | None = None
    wall_s: float | None = Field(default=None, exclude=True)
    """Kept out of the record file so that repeated runs serialize identically."""


def during_final_metrics(record: RunRecord) -> tuple[float, float]:
    """Mean accuracy of each task right after training it, and after the last task."""
    if record.status != "ok" or not record.accuracy:
        return float("nan"), float("nan")
    A = record.accuracy
    K = len(A)
    during = float(np.mean([A[k][k] for k in range(K)]))
    final = float(np.mean([A[k][K - 1] for k in range(K)]))
    return during, final

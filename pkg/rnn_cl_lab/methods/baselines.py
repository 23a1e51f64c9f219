"""Fine-tuning, From-scratch and Multitask baselines."""

from __future__ import annotations

import numpy as np

from ..autodiff import ParamVector
from ..seeding import rng_stream
from .base import Protection


class FromScratch(Protection):
    """Independent parameters per task: reinitialize at every task start, keep each final copy."""

    name = "from_scratch"

    def __init__(self) -> None:
        self.stored: dict[int, ParamVector] = {}

    def on_task_start(self, task_id: int, params: ParamVector) -> ParamVector:
        if task_id == 0:
            return params
        return self.learner.init_params(rng_stream(self.learner.context.seed, "init", task_id))

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        self.stored[task_id] = params.frozen()

    def eval_params(self, task_id: int, params: ParamVector) -> ParamVector | None:
        return self.stored.get(task_id)

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {f"scratch.{k}": {"psi": p.entries} for k, p in self.stored.items()}

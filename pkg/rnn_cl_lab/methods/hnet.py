"""Task-conditioned hypernetwork protection."""

from __future__ import annotations

import numpy as np

from ..autodiff import ParamLayout, ParamVector
from ..autodiff.tape import Node
from ..models.hnet import HnetCheckpoint, HnetConfig, Hypernetwork, checkpoint, generate_weights, hnet_regularizer
from ..seeding import rng_stream
from .base import Protection


class HypernetProtection(Protection):
    """Trains hypernetwork weights and task embeddings instead of psi."""

    name = "hnet"
    generates_weights = True

    def __init__(self, config: HnetConfig, n_tasks: int, beta: float = 0.01, n_subset: int | None = None):
        self.config = config
        self.n_tasks = n_tasks
        self.beta = beta
        self.n_subset = n_subset
        self.hnet: Hypernetwork | None = None
        self.ckpt: HnetCheckpoint | None = None
        self._rng: np.random.Generator | None = None

    def layout(self, base: ParamLayout) -> ParamLayout:
        self.hnet = Hypernetwork(self.config, base.size, self.n_tasks)
        return self.hnet.layout

    def attach(self, learner) -> None:
        super().attach(learner)
        self._rng = rng_stream(learner.context.seed, "hnet-subset")

    def init_params(self, params: ParamVector, rng: np.random.Generator) -> None:
        params.entries[:] = self.hnet.init_params(rng).entries

    def main_weights(self, params: Node, task_id: int) -> Node:
        return generate_weights(self.hnet, params, task_id)

    def penalty(self, params: Node, task_id: int) -> dict[str, Node]:
        if self.ckpt is None:
            return {}
        return {"hnet": hnet_regularizer(self.hnet, params, self.ckpt, self.beta, self.n_subset, self._rng)}

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        self.ckpt = checkpoint(self.hnet, params, task_id + 1)

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        if self.ckpt is None:
            return {}
        return {"hnet.checkpoint": {v.name: self.ckpt.theta.view(v.name) for v in self.ckpt.theta.layout}}

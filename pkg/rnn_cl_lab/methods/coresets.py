"""Coresets: replay stored inputs of earlier tasks with distilled soft targets."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..autodiff import ParamVector, tape
from ..autodiff.tape import Node, sigmoid_array
from ..data.copytask import SampleBatch, gen_batch
from ..errors import DataError
from ..models.losses import seq_bce_loss
from ..seeding import rng_stream
from .base import Learner, Protection, split_counts

logger = logging.getLogger(__name__)


def _read_only(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def coreset_build(dataset: SampleBatch, N: int, rng: np.random.Generator) -> SampleBatch:
    """``N`` samples drawn without replacement; the stored arrays are read-only."""
    if N > dataset.size:
        raise DataError(f"coreset of {N} samples from a dataset of {dataset.size}")
    index = np.sort(rng.choice(dataset.size, size=N, replace=False))
    chosen = dataset.subset(index)
    return SampleBatch(_read_only(chosen.x), _read_only(chosen.y), _read_only(chosen.loss_weight), dataset.task_id)


@dataclass(frozen=True)
class SoftTargetProvider:
    """Frozen parameter snapshot used to label replayed inputs."""

    learner: Learner
    params: ParamVector

    def __call__(self, inputs: np.ndarray, task_id: int) -> np.ndarray:
        return sigmoid_array(self.learner.predict(self.params, inputs, task_id))


def distill_targets(provider: SoftTargetProvider, inputs: np.ndarray, task_id: int) -> np.ndarray:
    return provider(inputs, task_id)


def distill_loss(logits: Node, replay: SampleBatch, soft_targets: np.ndarray, lam: float) -> Node:
    """``lam`` times the BCE of the current logits against soft targets on the recall window."""
    if lam == 0:
        return tape.constant(0.0)
    return tape.scale(seq_bce_loss(logits, replay, target=soft_targets), lam)


class Coresets(Protection):
    name = "coresets"

    def __init__(self, size: int = 100, lam: float = 1.0, pool: int = 1000):
        self.size = size
        self.lam = lam
        self.pool = max(pool, size)
        self.coresets: dict[int, SampleBatch] = {}
        self.provider: SoftTargetProvider | None = None
        self._rng: np.random.Generator | None = None

    def attach(self, learner) -> None:
        super().attach(learner)
        self._rng = rng_stream(learner.context.seed, "coreset")

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        ctx = self.learner.context
        dataset = gen_batch(ctx.copy, ctx.specs[task_id], rng_stream(ctx.seed, "coreset", task_id), self.pool)
        self.coresets[task_id] = coreset_build(dataset, self.size, self._rng)
        self.provider = SoftTargetProvider(self.learner, params.frozen())
        logger.debug("stored a coreset of %d samples for task %d", self.size, task_id)

    def replay_loss(self, params: Node, batches: list[SampleBatch], task_id: int) -> dict[str, Node]:
        previous = [k for k in sorted(self.coresets) if k != task_id]
        if not previous or self.lam == 0:
            return {}
        n = sum(b.size for b in batches)
        terms = []
        for k, count in zip(previous, split_counts(n, len(previous))):
            if count == 0:
                continue
            stored = self.coresets[k]
            replay = stored.subset(self._rng.choice(stored.size, size=min(count, stored.size), replace=False))
            soft = distill_targets(self.provider, replay.x, k)
            logits, _ = self.learner.forward(params, replay.x, k)
            terms.append(tape.scale(distill_loss(logits, replay, soft, self.lam), 1.0 / len(previous)))
        return {"distill": tape.total(terms)}

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {f"coreset.{k}": {"x": c.x} for k, c in self.coresets.items()}

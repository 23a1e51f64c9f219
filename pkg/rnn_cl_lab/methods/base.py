"""Learner: a main network plus the protections of one CL method.

A protection contributes to a learner through hooks (extra parameters,
generated weights, hidden masks, penalties, replay losses and task
boundary callbacks). A method is an ordered list of protections, so
Masking+SI is simply ``[Masking, SynapticIntelligence]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import ClassVar, Iterable, Mapping

import numpy as np

from ..autodiff import ParamLayout, ParamVector, orthogonal_reg, tape
from ..autodiff.tape import Node
from ..data.copytask import CopyConfig, SampleBatch, TaskSpec, gen_batch
from ..models.losses import seq_bce_loss
from ..models.rnn import RNNArch, forward_sequence, init_params

logger = logging.getLogger(__name__)


def active_block(weight: Node, active: np.ndarray) -> Node:
    """Rows and columns of a square hidden-to-hidden matrix restricted to ``active`` units."""
    n = weight.shape[1]
    index = (active[:, None] * n + active[None, :]).reshape(-1)
    return tape.reshape(tape.take(weight, index), (len(active), len(active)))


@dataclass
class LearnerContext:
    arch: RNNArch
    copy: CopyConfig
    specs: list[TaskSpec]
    seed: int = 0
    n_fisher: int = 1000
    orth_init: bool = True

    @property
    def n_tasks(self) -> int:
        return len(self.specs)


class Protection:
    """No-op hooks; subclasses override what they need."""

    name: ClassVar[str] = "protection"
    generates_weights: ClassVar[bool] = False
    wants_task_grad: ClassVar[bool] = False

    learner: "Learner"

    def attach(self, learner: "Learner") -> None:
        self.learner = learner

    def layout(self, base: ParamLayout) -> ParamLayout:
        return base

    def init_params(self, params: ParamVector, rng: np.random.Generator) -> None:
        pass

    def main_weights(self, params: Node, task_id: int) -> Node | None:
        return None

    def hidden_mask(self, task_id: int) -> np.ndarray | None:
        return None

    def penalty(self, params: Node, task_id: int) -> dict[str, Node]:
        return {}

    def replay_loss(self, params: Node, batches: list[SampleBatch], task_id: int) -> dict[str, Node]:
        return {}

    def on_task_start(self, task_id: int, params: ParamVector) -> ParamVector:
        return params

    def after_step(self, task_grad: np.ndarray, task_delta: np.ndarray, params: ParamVector) -> None:
        pass

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        pass

    def eval_params(self, task_id: int, params: ParamVector) -> ParamVector | None:
        return None

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {}


def split_counts(n: int, parts: int) -> list[int]:
    """``n`` items over ``parts`` groups, sizes differing by at most one."""
    return [n // parts + (1 if j < n % parts else 0) for j in range(parts)]


@dataclass
class Learner:
    name: str
    context: LearnerContext
    protections: list[Protection] = field(default_factory=list)
    joint: bool = False
    """Train all tasks at once on mixed minibatches (Multitask)."""

    def __post_init__(self) -> None:
        self.arch_layout = self.context.arch.layout()
        layout = self.arch_layout
        for p in self.protections:
            layout = p.layout(layout)
        self.layout = layout
        self._generator = next((p for p in self.protections if p.generates_weights), None)
        for p in self.protections:
            p.attach(self)

    @property
    def arch(self) -> RNNArch:
        return self.context.arch

    @property
    def wants_task_grad(self) -> bool:
        return any(p.wants_task_grad for p in self.protections)

    def shared_mask(self) -> np.ndarray:
        """Entries of the main network every task uses (empty for generated weights)."""
        if self._generator is not None:
            return np.zeros(self.layout.size, dtype=bool)
        return self.layout.mask(lambda n: n in self.arch_layout and self.arch.is_shared(n))

    # ------------------------------------------------------------------
    # parameters
    # ------------------------------------------------------------------
    def init_params(self, rng: np.random.Generator) -> ParamVector:
        params = ParamVector(self.layout)
        if self._generator is None:
            main = init_params(self.arch, rng, orthogonal=self.context.orth_init)
            params.entries[: main.entries.size] = main.entries
        for p in self.protections:
            p.init_params(params, rng)
        return params

    def weights(self, params: Node | ParamVector, task_id: int) -> Node:
        """Flat main-network vector psi used for ``task_id``."""
        if isinstance(params, ParamVector):
            params = tape.constant(params.entries)
        if self._generator is not None:
            return self._generator.main_weights(params, task_id)
        if self.layout.size == self.arch_layout.size:
            return params
        return tape.view(params, 0, (self.arch_layout.size,))

    def hidden_mask(self, task_id: int) -> np.ndarray | None:
        masks = [m for m in (p.hidden_mask(task_id) for p in self.protections) if m is not None]
        if not masks:
            return None
        return np.prod(masks, axis=0)

    def trainable_mask(self, tasks: Iterable[int]) -> np.ndarray:
        """Everything except the heads of tasks not being trained."""
        heads = {f"head.{self.arch.head_of(k)}." for k in tasks}

        def trainable(name: str) -> bool:
            if self._generator is not None or name not in self.arch_layout:
                return True
            if name.startswith("head."):
                return any(name.startswith(h) for h in heads)
            return True

        return self.layout.mask(trainable)

    # ------------------------------------------------------------------
    # forward and losses
    # ------------------------------------------------------------------
    def forward(self, params: Node | ParamVector, x: np.ndarray, task_id: int):
        return forward_sequence(self.arch, self.weights(params, task_id), x, task_id, self.hidden_mask(task_id))

    def predict(self, params: ParamVector, x: np.ndarray, task_id: int) -> np.ndarray:
        evaluated = self.eval_params(task_id, params)
        logits, _ = self.forward(evaluated, x, task_id)
        return logits.value

    def task_loss(self, params: Node, batches: list[SampleBatch]) -> Node:
        n = sum(b.size for b in batches)
        terms = []
        for batch in batches:
            logits, _ = self.forward(params, batch.x, batch.task_id)
            terms.append(tape.scale(seq_bce_loss(logits, batch), batch.size / n))
        return tape.total(terms)

    def loss_terms(
        self,
        params: Node,
        batches: list[SampleBatch],
        task_id: int,
        orth_reg: float = 0.0,
    ) -> dict[str, Node]:
        """Named loss terms; ``"task"`` is always present."""
        terms = {"task": self.task_loss(params, batches)}
        if orth_reg:
            weights = self.arch_layout.bind(self.weights(params, task_id))
            blocks = self.arch.recurrent_blocks(weights)
            mask = self.hidden_mask(task_id)
            if mask is not None:
                # only the units this task uses
                active = np.flatnonzero(mask)
                blocks = [active_block(W, active) for W in blocks]
            terms["orth"] = tape.total(orthogonal_reg(W, orth_reg) for W in blocks)
        for p in self.protections:
            terms.update(p.penalty(params, task_id))
            terms.update(p.replay_loss(params, batches, task_id))
        return terms

    def sample_nll(self, params: Node, batch: SampleBatch) -> Node:
        logits, _ = self.forward(params, batch.x, batch.task_id)
        return seq_bce_loss(logits, batch)

    # ------------------------------------------------------------------
    # data
    # ------------------------------------------------------------------
    def train_batches(self, tasks: list[int], rngs: Mapping[int, np.random.Generator], n: int) -> list[SampleBatch]:
        counts = split_counts(n, len(tasks))
        return [
            gen_batch(self.context.copy, self.context.specs[k], rngs[k], c)
            for k, c in zip(tasks, counts)
            if c > 0
        ]

    # ------------------------------------------------------------------
    # boundaries
    # ------------------------------------------------------------------
    def on_task_start(self, task_id: int, params: ParamVector) -> ParamVector:
        for p in self.protections:
            params = p.on_task_start(task_id, params)
        return params

    def after_step(self, task_grad: np.ndarray, task_delta: np.ndarray, params: ParamVector) -> None:
        for p in self.protections:
            p.after_step(task_grad, task_delta, params)

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        for p in self.protections:
            logger.debug("%s: consolidating task %d", p.name, task_id)
            p.on_task_end(task_id, params)

    def eval_params(self, task_id: int, params: ParamVector) -> ParamVector:
        for p in self.protections:
            stored = p.eval_params(task_id, params)
            if stored is not None:
                return stored
        return params

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        sections: dict[str, dict[str, np.ndarray]] = {}
        for p in self.protections:
            sections.update(p.state_arrays())
        return sections

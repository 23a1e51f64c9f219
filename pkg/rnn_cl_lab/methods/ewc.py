"""Online EWC with a diagonal empirical Fisher over the shared weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ..autodiff import ParamVector, tape
from ..autodiff.tape import Node
from ..errors import DataError, ShapeError
from ..data.copytask import gen_batch
from ..seeding import rng_stream
from .base import Protection

logger = logging.getLogger(__name__)


@dataclass
class EwcState:
    index: np.ndarray
    """Flat positions of the protected (shared) entries."""

    lam: float = 1.0
    fisher: np.ndarray | None = None
    anchor: np.ndarray | None = None
    """psi~ restricted to ``index``; None before the first task ends."""

    n_tasks: int = 0

    def full(self, size: int) -> np.ndarray:
        """Fisher scattered back onto a flat vector of ``size`` entries."""
        out = np.zeros(size)
        out[self.index] = self.fisher
        return out

    @classmethod
    def over(cls, index: np.ndarray, lam: float) -> "EwcState":
        return cls(index=np.asarray(index, dtype=np.int64), lam=lam, fisher=np.zeros(len(index)))


def ewc_accumulate_fisher(
    state: EwcState,
    params: ParamVector,
    nll_fns: Iterable[Callable[[Node], Node]],
) -> np.ndarray:
    """Add ``mean_n (d nll_n / d psi)^2`` into the state and move the anchor to ``params``.

    Each callable maps the parameter node to the NLL of one sample. Returns
    this task's Fisher.
    """
    task_fisher = np.zeros(len(state.index))
    n = 0
    for nll in nll_fns:
        node = params.node("psi")
        grad = tape.backward(nll(node), {"psi": node})["psi"]
        task_fisher += grad[state.index] ** 2
        n += 1
    if n == 0:
        raise DataError("Fisher estimation needs at least one sample")
    task_fisher /= n
    state.fisher = state.fisher + task_fisher
    state.anchor = params.entries[state.index].copy()
    state.n_tasks += 1
    logger.debug("fisher over %d samples: mean %.3e", n, float(task_fisher.mean()) if task_fisher.size else 0.0)
    return task_fisher


def ewc_penalty(params: Node, state: EwcState) -> Node:
    """``lam * sum_i F_i (psi_i - psi~_i)^2``."""
    if state.anchor is None:
        return tape.constant(0.0)
    psi = tape.take(params, state.index)
    if psi.shape != state.anchor.shape:
        raise ShapeError("parameter vector does not match the EWC state")
    return tape.scale(tape.sum(tape.mul(tape.square(tape.sub(psi, state.anchor)), state.fisher)), state.lam)


class OnlineEwc(Protection):
    name = "ewc"

    def __init__(self, lam: float):
        self.lam = lam
        self.state: EwcState | None = None

    def attach(self, learner) -> None:
        super().attach(learner)
        self.state = EwcState.over(np.flatnonzero(learner.shared_mask()), self.lam)

    def penalty(self, params: Node, task_id: int) -> dict[str, Node]:
        if self.state.anchor is None:
            return {}
        return {"ewc": ewc_penalty(params, self.state)}

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        ctx = self.learner.context
        batch = gen_batch(ctx.copy, ctx.specs[task_id], rng_stream(ctx.seed, "fisher", task_id), ctx.n_fisher)
        nll_fns = (
            (lambda node, s=batch.subset([n]): self.learner.sample_nll(node, s))
            for n in range(batch.size)
        )
        ewc_accumulate_fisher(self.state, params, nll_fns)

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        if self.state.anchor is None:
            return {}
        return {"ewc": {"fisher": self.state.fisher, "anchor": self.state.anchor, "index": self.state.index.astype(np.float64)}}

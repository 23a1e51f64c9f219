"""Synaptic Intelligence: a path-integral importance estimate over the shared weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..autodiff import ParamVector, tape
from ..autodiff.tape import Node
from ..errors import ShapeError
from .base import Protection

logger = logging.getLogger(__name__)


@dataclass
class SiState:
    index: np.ndarray
    omega_running: np.ndarray
    """Running importance of the current task."""

    omega: np.ndarray
    """Consolidated importance, nondecreasing across tasks."""

    task_start: np.ndarray
    """psi at the start of the current task; after consolidation also the penalty anchor."""

    lam: float = 1.0
    epsilon: float = 1e-3
    denominator: Literal["printed", "squared"] = "printed"
    n_tasks: int = 0

    @classmethod
    def over(cls, index: np.ndarray, start: np.ndarray, lam: float = 1.0, epsilon: float = 1e-3, denominator="printed") -> "SiState":
        index = np.asarray(index, dtype=np.int64)
        size = len(index)
        return cls(index, np.zeros(size), np.zeros(size), np.asarray(start, dtype=np.float64)[index].copy(), lam, epsilon, denominator)

    def full(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.index] = self.omega
        return out


def si_track_step(state: SiState, grad_task: np.ndarray, delta: np.ndarray) -> None:
    """``omega~ -= delta * grad`` over the protected entries.

    ``delta`` is the update the task loss alone would produce.
    """
    grad_task = np.asarray(grad_task, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if grad_task.shape != state.omega_running.shape or delta.shape != state.omega_running.shape:
        raise ShapeError(
            f"SI tracks {state.omega_running.shape[0]} entries, got {grad_task.shape} and {delta.shape}"
        )
    state.omega_running -= delta * grad_task


def si_consolidate(state: SiState, psi_end: np.ndarray) -> np.ndarray:
    """Fold the running importance into omega at a task boundary; returns the increment."""
    psi_end = np.asarray(psi_end, dtype=np.float64)
    moved = psi_end - state.task_start
    if state.denominator == "squared":
        denom = moved**2 + state.epsilon
    else:
        denom = np.abs(moved) + state.epsilon
    increment = np.maximum(state.omega_running, 0.0) / denom
    state.omega = state.omega + increment
    state.omega_running = np.zeros_like(state.omega_running)
    state.task_start = psi_end.copy()
    state.n_tasks += 1
    return increment


def si_penalty(params: Node, state: SiState) -> Node:
    """``lam * sum_i Omega_i (psi_i - psi~_i)^2`` with psi~ the last task's end point."""
    psi = tape.take(params, state.index)
    return tape.scale(tape.sum(tape.mul(tape.square(tape.sub(psi, state.task_start)), state.omega)), state.lam)


class SynapticIntelligence(Protection):
    name = "si"
    wants_task_grad = True

    def __init__(self, lam: float, epsilon: float = 1e-3, denominator: Literal["printed", "squared"] = "printed"):
        self.lam = lam
        self.epsilon = epsilon
        self.denominator = denominator
        self.state: SiState | None = None

    def on_task_start(self, task_id: int, params: ParamVector) -> ParamVector:
        if self.state is None:
            index = np.flatnonzero(self.learner.shared_mask())
            self.state = SiState.over(index, params.entries, self.lam, self.epsilon, self.denominator)
        else:
            self.state.task_start = params.entries[self.state.index].copy()
        return params

    def penalty(self, params: Node, task_id: int) -> dict[str, Node]:
        if self.state is None or self.state.n_tasks == 0:
            return {}
        return {"si": si_penalty(params, self.state)}

    def after_step(self, task_grad: np.ndarray, task_delta: np.ndarray, params: ParamVector) -> None:
        idx = self.state.index
        si_track_step(self.state, task_grad[idx], task_delta[idx])

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        increment = si_consolidate(self.state, params.entries[self.state.index])
        logger.debug("SI task %d: mean importance increment %.3e", task_id, float(increment.mean()) if increment.size else 0.0)

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        if self.state is None:
            return {}
        return {"si": {"omega": self.state.omega, "anchor": self.state.task_start, "index": self.state.index.astype(np.float64)}}

"""Training loop for one task (or one joint phase)."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from .autodiff import AdamState, ParamVector, adam_step, clip_global_norm, tape
from .config import OptimSection
from .errors import DivergenceError, NonFiniteError
from .methods.base import Learner
from .seeding import rng_stream

logger = logging.getLogger(__name__)

Progress = Callable[[int, int, float], None]


def _clip(grads: np.ndarray, max_norm: float | None) -> np.ndarray:
    return grads if max_norm is None else clip_global_norm(grads, max_norm)


def train_phase(
    learner: Learner,
    params: ParamVector,
    tasks: list[int],
    optim: OptimSection,
    seed: int,
    progress: Progress | None = None,
) -> ParamVector:
    """Adam on the learner's composite loss for ``optim.iters_per_task * len(tasks)`` steps.

    The optimizer state starts fresh and heads of tasks outside ``tasks``
    stay frozen. When a protection needs the task-only gradient, the step
    the task loss alone would take is computed on a copy of the optimizer
    state and handed to ``learner.after_step``.
    """
    task_id = tasks[-1]
    state = AdamState.zeros(len(params), optim.lr, optim.beta1, optim.beta2, optim.eps)
    trainable = learner.trainable_mask(tasks)
    rngs = {k: rng_stream(seed, "data", k) for k in tasks}
    n_iters = optim.iters_per_task * len(tasks)
    track = learner.wants_task_grad

    for it in range(n_iters):
        batches = learner.train_batches(tasks, rngs, optim.batch_size)
        node = params.node("psi")
        terms = learner.loss_terms(node, batches, task_id, optim.orth_reg)
        loss = tape.total(terms.values())
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(task_id, it, value)

        try:
            if track:
                task_grad = _clip(tape.backward(terms["task"], {"psi": node})["psi"].copy(), optim.clip_norm)
                lookahead, _ = adam_step(params, task_grad, state.copy(), trainable)
            grads = _clip(tape.backward(loss, {"psi": node})["psi"], optim.clip_norm)
            new_params, state = adam_step(params, grads, state, trainable)
        except NonFiniteError as e:
            raise DivergenceError(task_id, it, value) from e

        if track:
            learner.after_step(task_grad, lookahead.entries - params.entries, new_params)
        params = new_params

        if progress is not None and (it % 50 == 0 or it == n_iters - 1):
            progress(it + 1, n_iters, value)
        if it % 500 == 0:
            logger.debug(
                "task %d iter %d: %s",
                task_id,
                it,
                ", ".join(f"{k}={t.item():.4f}" for k, t in terms.items()),
            )
    return params

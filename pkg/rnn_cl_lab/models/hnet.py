"""Chunked feedforward hypernetwork producing main-network weights per task.

The hypernetwork maps ``concat(e_k, c_i)`` for every chunk embedding
``c_i`` to one chunk of the flattened main-network vector; chunks are
concatenated and truncated to ``|psi|``. All chunks are evaluated as one
batch. Chunk embeddings are part of theta and shared across tasks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..autodiff import ParamLayout, ParamVector, tape
from ..autodiff.tape import Node
from ..errors import ConfigError, TaskError

logger = logging.getLogger(__name__)

_ACTIVATIONS = {"sigmoid": tape.sigmoid, "tanh": tape.tanh, "linear": tape.identity}


class HnetConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden: tuple[int, ...] = (32, 32)
    activation: Literal["sigmoid", "tanh", "linear"] = "sigmoid"
    task_emb_dim: int = 16
    chunk_emb_dim: int = 16
    chunk_size: int = 500
    emb_init_std: float = 1.0
    max_compression: float | None = 1.0
    """Upper bound on |theta + embeddings| / |psi|; None disables the check."""


class Hypernetwork:
    """Architecture of a chunked hypernetwork for a target of ``target_size`` weights."""

    def __init__(self, config: HnetConfig, target_size: int, n_tasks: int):
        self.config = config
        self.target_size = target_size
        self.n_tasks = n_tasks
        self.n_chunks = math.ceil(target_size / config.chunk_size)
        sizes = [config.task_emb_dim + config.chunk_emb_dim, *config.hidden, config.chunk_size]
        entries: list[tuple[str, tuple[int, ...]]] = []
        for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            entries += [(f"hnet.layer{l}.W", (fan_out, fan_in)), (f"hnet.layer{l}.b", (fan_out,))]
        entries.append(("hnet.chunk_emb", (self.n_chunks, config.chunk_emb_dim)))
        entries += [(f"emb.{k}", (config.task_emb_dim,)) for k in range(n_tasks)]
        self.layout = ParamLayout(entries)
        self.n_layers = len(sizes) - 1

        ratio = self.layout.size / target_size
        logger.debug("hypernetwork: %d chunks, compression ratio %.3f", self.n_chunks, ratio)
        if config.max_compression is not None and ratio > config.max_compression:
            raise ConfigError(
                f"hypernetwork has {self.layout.size} weights for a {target_size}-weight target "
                f"(ratio {ratio:.3f} > {config.max_compression})"
            )

    @property
    def compression_ratio(self) -> float:
        return self.layout.size / self.target_size

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        params = ParamVector(self.layout)
        for l in range(self.n_layers):
            W = self.layout[f"hnet.layer{l}.W"]
            fan_out, fan_in = W.shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params.set(W.name, rng.uniform(-bound, bound, W.shape))
        params.set("hnet.chunk_emb", rng.normal(0.0, 1.0, self.layout["hnet.chunk_emb"].shape))
        for k in range(self.n_tasks):
            params.set(f"emb.{k}", rng.normal(0.0, self.config.emb_init_std, self.config.task_emb_dim))
        return params

    def is_theta(self, name: str) -> bool:
        return name.startswith("hnet.")


def generate_weights(
    hnet: Hypernetwork,
    theta: Node | ParamVector,
    task_id: int,
    embedding: Node | np.ndarray | None = None,
) -> Node:
    """Flat main-network vector ``psi = h(e_k, theta)``.

    ``embedding`` overrides the stored ``e_k`` (used for checkpoint targets).
    """
    if not 0 <= task_id < hnet.n_tasks:
        raise TaskError(f"task {task_id} outside 0..{hnet.n_tasks - 1}")
    if isinstance(theta, ParamVector):
        theta = tape.constant(theta.entries)
    w = hnet.layout.bind(theta)
    emb = w[f"emb.{task_id}"] if embedding is None else tape.constant(embedding)
    ones = np.ones((hnet.n_chunks, 1))
    tiled = tape.mul(tape.reshape(emb, (1, hnet.config.task_emb_dim)), ones)
    act = tape.concat([tiled, w["hnet.chunk_emb"]], axis=1)
    activation = _ACTIVATIONS[hnet.config.activation]
    for l in range(hnet.n_layers):
        act = tape.add(tape.matmul(act, tape.transpose(w[f"hnet.layer{l}.W"])), w[f"hnet.layer{l}.b"])
        if l < hnet.n_layers - 1:
            act = activation(act)
    flat = tape.reshape(act, (hnet.n_chunks * hnet.config.chunk_size,))
    return tape.view(flat, 0, (hnet.target_size,))


@dataclass(frozen=True)
class HnetCheckpoint:
    """Frozen theta and embeddings after a task, plus the outputs they produce."""

    theta: ParamVector
    n_tasks_seen: int
    targets: tuple[np.ndarray, ...]


def checkpoint(hnet: Hypernetwork, params: ParamVector, n_tasks_seen: int) -> HnetCheckpoint:
    frozen = params.frozen()
    targets = []
    for k in range(n_tasks_seen):
        out = generate_weights(hnet, frozen, k).value.copy()
        out.setflags(write=False)
        targets.append(out)
    return HnetCheckpoint(frozen, n_tasks_seen, tuple(targets))


def hnet_regularizer(
    hnet: Hypernetwork,
    theta: Node,
    ckpt: HnetCheckpoint | None,
    beta: float,
    n_subset: int | None = None,
    rng: np.random.Generator | None = None,
) -> Node:
    """``beta / |S| * sum_{k in S} ||h(e_k, theta) - h(e~_k, theta~)||^2``.

    ``S`` is every task in the checkpoint, or ``n_subset`` of them drawn
    without replacement from ``rng``.
    """
    if ckpt is None or ckpt.n_tasks_seen == 0 or beta == 0:
        return tape.constant(0.0)
    tasks: Sequence[int] = range(ckpt.n_tasks_seen)
    if n_subset is not None and n_subset < ckpt.n_tasks_seen:
        if n_subset < 1:
            raise ConfigError("the regularizer subset needs at least one task")
        rng = rng if rng is not None else np.random.default_rng()
        tasks = sorted(rng.choice(ckpt.n_tasks_seen, size=n_subset, replace=False).tolist())
    terms = [
        tape.sum(tape.square(tape.sub(generate_weights(hnet, theta, k), ckpt.targets[k])))
        for k in tasks
    ]
    return tape.scale(tape.total(terms), beta / len(terms))

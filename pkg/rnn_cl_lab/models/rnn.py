"""Elman RNN and LSTM with one linear output head per task."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..autodiff import ParamLayout, ParamVector, orthogonal_init, tape
from ..autodiff.tape import Node
from ..errors import ShapeError, TaskError


class RNNArch(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["vanilla", "lstm"] = "vanilla"
    n_in: int
    """Raw input features (F_in)."""

    n_h: int = 128
    n_out: int
    """Output features per head (F_out)."""

    n_tasks: int = 1
    task_id_input: bool = False
    """Append a one-hot task id to every input step."""

    single_head: bool = False
    """Share one output head across all tasks."""

    n_latent: int = 0
    """Latent size of the VAE encoder branch (0 disables it)."""

    @property
    def input_size(self) -> int:
        return self.n_in + (self.n_tasks if self.task_id_input else 0)

    @property
    def n_heads(self) -> int:
        return 1 if self.single_head else self.n_tasks

    def head_of(self, task_id: int) -> int:
        if not 0 <= task_id < self.n_tasks:
            raise TaskError(f"task {task_id} outside 0..{self.n_tasks - 1}")
        return 0 if self.single_head else task_id

    def layout(self) -> ParamLayout:
        n_h, n_x = self.n_h, self.input_size
        if self.kind == "vanilla":
            entries = [
                ("rnn.W_xh", (n_h, n_x)),
                ("rnn.W_hh", (n_h, n_h)),
                ("rnn.b_h", (n_h,)),
                ("rnn.W_ro", (n_h, n_h)),
                ("rnn.b_ro", (n_h,)),
            ]
        else:
            entries = [
                ("rnn.W_x", (4 * n_h, n_x)),
                ("rnn.W_h", (4 * n_h, n_h)),
                ("rnn.b", (4 * n_h,)),
            ]
        if self.n_latent:
            entries += [("vae.W_xi", (2 * self.n_latent, n_h)), ("vae.b_xi", (2 * self.n_latent,))]
        for k in range(self.n_heads):
            entries += [(f"head.{k}.W", (self.n_out, n_h)), (f"head.{k}.b", (self.n_out,))]
        return ParamLayout(entries)

    def is_shared(self, name: str) -> bool:
        """Weights used by every task (heads only when there is a single one)."""
        if name.startswith(("rnn.", "vae.")):
            return True
        return self.single_head and name.startswith("head.")

    def recurrent_blocks(self, weights: dict[str, Node]) -> list[Node]:
        """Every square hidden-to-hidden matrix."""
        if self.kind == "vanilla":
            return [weights["rnn.W_hh"]]
        n_h = self.n_h
        return [tape.view(weights["rnn.W_h"], g * n_h * n_h, (n_h, n_h)) for g in range(4)]


@dataclass
class HiddenTrace:
    h: list[Node]
    out: list[Node] = field(default_factory=list)
    c: list[Node] | None = None

    def states(self) -> np.ndarray:
        """(T+1) x B x n_h array of hidden states."""
        return np.stack([n.value for n in self.h])


def init_params(arch: RNNArch, rng: np.random.Generator, orthogonal: bool = True) -> ParamVector:
    params = ParamVector(arch.layout())
    n_h, n_x = arch.n_h, arch.input_size

    def recurrent() -> np.ndarray:
        if orthogonal:
            return orthogonal_init(n_h, n_h, rng)
        return rng.normal(0.0, 1.0 / np.sqrt(n_h), (n_h, n_h))

    if arch.kind == "vanilla":
        params.set("rnn.W_xh", rng.normal(0.0, 1.0 / np.sqrt(n_x), (n_h, n_x)))
        params.set("rnn.W_hh", recurrent())
        params.set("rnn.W_ro", rng.normal(0.0, 1.0 / np.sqrt(n_h), (n_h, n_h)))
    else:
        params.set("rnn.W_x", rng.normal(0.0, 1.0 / np.sqrt(n_x), (4 * n_h, n_x)))
        params.set("rnn.W_h", np.concatenate([recurrent() for _ in range(4)]))
    if arch.n_latent:
        params.set("vae.W_xi", rng.normal(0.0, 1.0 / np.sqrt(n_h), (2 * arch.n_latent, n_h)))
    for k in range(arch.n_heads):
        params.set(f"head.{k}.W", rng.normal(0.0, 1.0 / np.sqrt(n_h), (arch.n_out, n_h)))
    return params


def _affine(inp: Node, W: Node, b: Node) -> Node:
    return tape.add(tape.matmul(inp, tape.transpose(W)), b)


def rnn_step(
    x_t: Node,
    h_prev: Node,
    weights: dict[str, Node],
    mask: np.ndarray | None = None,
) -> tuple[Node, Node]:
    """``h_t = tanh(W_hh h + W_xh x + b)`` followed by the linear readout."""
    pre = tape.add(tape.matmul(h_prev, tape.transpose(weights["rnn.W_hh"])), _affine(x_t, weights["rnn.W_xh"], weights["rnn.b_h"]))
    h = tape.tanh(pre)
    if mask is not None:
        h = tape.mul(h, mask)
    out = _affine(h, weights["rnn.W_ro"], weights["rnn.b_ro"])
    if mask is not None:
        out = tape.mul(out, mask)
    return h, out


def lstm_step(
    x_t: Node,
    state: tuple[Node, Node],
    weights: dict[str, Node],
    mask: np.ndarray | None = None,
) -> tuple[Node, Node]:
    h_prev, c_prev = state
    n_h = h_prev.shape[-1]
    gates = tape.add(tape.matmul(h_prev, tape.transpose(weights["rnn.W_h"])), _affine(x_t, weights["rnn.W_x"], weights["rnn.b"]))
    i = tape.sigmoid(tape.columns(gates, 0, n_h))
    f = tape.sigmoid(tape.columns(gates, n_h, 2 * n_h))
    g = tape.tanh(tape.columns(gates, 2 * n_h, 3 * n_h))
    o = tape.sigmoid(tape.columns(gates, 3 * n_h, 4 * n_h))
    c = tape.add(tape.mul(f, c_prev), tape.mul(i, g))
    h = tape.mul(o, tape.tanh(c))
    if mask is not None:
        h = tape.mul(h, mask)
    return h, c


def with_task_input(arch: RNNArch, x: np.ndarray, task_id: int | np.ndarray) -> np.ndarray:
    if not arch.task_id_input:
        return x
    T, B, _ = x.shape
    onehot = np.zeros((T, B, arch.n_tasks))
    onehot[:, np.arange(B), np.broadcast_to(np.asarray(task_id), (B,))] = 1.0
    return np.concatenate([x, onehot], axis=-1)


def run_trunk(
    arch: RNNArch,
    weights: dict[str, Node],
    x: np.ndarray,
    task_id: int | np.ndarray = 0,
    mask: np.ndarray | None = None,
) -> HiddenTrace:
    """Unroll the recurrent layer from ``h_0 = 0`` over a T x B x F_in input."""
    x = with_task_input(arch, np.asarray(x, dtype=np.float64), task_id)
    if x.ndim != 3 or x.shape[-1] != arch.input_size:
        raise ShapeError(f"input of shape {x.shape} for input size {arch.input_size}")
    B = x.shape[1]
    h = tape.constant(np.zeros((B, arch.n_h)))
    trace = HiddenTrace(h=[h])
    if arch.kind == "lstm":
        c = tape.constant(np.zeros((B, arch.n_h)))
        trace.c = [c]
    for t in range(x.shape[0]):
        x_t = tape.constant(x[t])
        if arch.kind == "vanilla":
            h, out = rnn_step(x_t, h, weights, mask)
        else:
            h, c = lstm_step(x_t, (h, c), weights, mask)
            out = h
            trace.c.append(c)
        trace.h.append(h)
        trace.out.append(out)
    return trace


def apply_head(arch: RNNArch, weights: dict[str, Node], trace: HiddenTrace, task_id: int) -> Node:
    """T x B x F_out logits of the task's head."""
    k = arch.head_of(task_id)
    if not trace.out:
        return tape.constant(np.zeros((0, trace.h[0].shape[0], arch.n_out)))
    W, b = weights[f"head.{k}.W"], weights[f"head.{k}.b"]
    return tape.stack([_affine(out, W, b) for out in trace.out])


def latent_params(arch: RNNArch, weights: dict[str, Node], trace: HiddenTrace) -> tuple[Node, Node]:
    """Per-step Gaussian parameters (mu, log sigma^2), each T x B x n_z."""
    if not arch.n_latent:
        raise ShapeError("architecture has no latent branch")
    xi = tape.stack([_affine(out, weights["vae.W_xi"], weights["vae.b_xi"]) for out in trace.out])
    return tape.columns(xi, 0, arch.n_latent), tape.columns(xi, arch.n_latent, 2 * arch.n_latent)


def bind(arch: RNNArch, psi: Node | ParamVector) -> dict[str, Node]:
    if isinstance(psi, ParamVector):
        psi = tape.constant(psi.entries)
    return arch.layout().bind(psi)


def forward_sequence(
    arch: RNNArch,
    psi: Node | ParamVector,
    x: np.ndarray,
    task_id: int,
    mask: np.ndarray | None = None,
) -> tuple[Node, HiddenTrace]:
    """Logits of head ``task_id`` at every step plus the hidden trace."""
    arch.head_of(task_id)
    weights = bind(arch, psi)
    trace = run_trunk(arch, weights, x, task_id, mask)
    return apply_head(arch, weights, trace, task_id), trace

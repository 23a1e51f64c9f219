"""Generative replay with a sequential VAE (Replay-through-Feedback).

The main network doubles as the encoder: a linear branch on its layer
output emits ``(mu_t, log sigma_t^2)`` at every step. A separate tanh RNN
decoder maps ``(z_t, one-hot task)`` to ``phi_t``, the Gaussian mean or
Bernoulli logits of ``x_t``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..autodiff import ParamLayout, ParamVector, orthogonal_init, tape
from ..autodiff.tape import Node, sigmoid_array
from ..data.copytask import SampleBatch
from ..errors import ShapeError
from ..models.losses import seq_bce_loss
from ..models.rnn import latent_params, run_trunk
from ..seeding import rng_stream
from .base import Learner, Protection, split_counts
from .coresets import SoftTargetProvider

logger = logging.getLogger(__name__)

Likelihood = Literal["gaussian", "bernoulli"]


def _batch_size(node: Node) -> int:
    return node.shape[1] if node.value.ndim == 3 else 1


@dataclass(frozen=True)
class DecoderSpec:
    n_z: int
    n_dec: int
    n_tasks: int
    n_out: int

    def layout(self) -> ParamLayout:
        return ParamLayout(
            [
                ("dec.W_zh", (self.n_dec, self.n_z + self.n_tasks)),
                ("dec.W_hh", (self.n_dec, self.n_dec)),
                ("dec.b_h", (self.n_dec,)),
                ("dec.W_out", (self.n_out, self.n_dec)),
                ("dec.b_out", (self.n_out,)),
            ]
        )

    def init(self, params: ParamVector, rng: np.random.Generator) -> None:
        fan_in = self.n_z + self.n_tasks
        params.set("dec.W_zh", rng.normal(0.0, 1.0 / np.sqrt(fan_in), (self.n_dec, fan_in)))
        params.set("dec.W_hh", orthogonal_init(self.n_dec, self.n_dec, rng))
        params.set("dec.W_out", rng.normal(0.0, 1.0 / np.sqrt(self.n_dec), (self.n_out, self.n_dec)))

    def bind(self, params: Node, layout: ParamLayout) -> dict[str, Node]:
        return {v.name: tape.view(params, layout[v.name].offset, v.shape) for v in self.layout()}


def decode(spec: DecoderSpec, weights: dict[str, Node], z: Node | np.ndarray, task_id: int) -> Node:
    """Unroll the decoder over a T x B x n_z latent sequence; returns T x B x n_out."""
    z = tape.constant(z)
    T, B = z.shape[0], z.shape[1]
    onehot = np.zeros((B, spec.n_tasks))
    onehot[:, task_id] = 1.0
    h = tape.constant(np.zeros((B, spec.n_dec)))
    W_in = tape.transpose(weights["dec.W_zh"])
    W_hh = tape.transpose(weights["dec.W_hh"])
    W_out = tape.transpose(weights["dec.W_out"])
    out = []
    for t in range(T):
        inp = tape.concat([tape.rows(z, t), tape.constant(onehot)], axis=1)
        h = tape.tanh(tape.add(tape.add(tape.matmul(inp, W_in), tape.matmul(h, W_hh)), weights["dec.b_h"]))
        out.append(tape.add(tape.matmul(h, W_out), weights["dec.b_out"]))
    if not out:
        return tape.constant(np.zeros((0, B, spec.n_out)))
    return tape.stack(out)


def vae_prior_match(mu: Node, logvar: Node) -> Node:
    """``sum_t sum_d KL(N(mu, sigma^2) || N(0, 1))``, averaged over the batch."""
    kl = tape.scale(tape.sub(tape.add(tape.square(mu), tape.exp(logvar)), tape.add(logvar, 1.0)), 0.5)
    return tape.scale(tape.sum(kl), 1.0 / _batch_size(mu))


def vae_recon_loss(
    x: np.ndarray,
    phi: Node,
    likelihood: Likelihood = "gaussian",
    tau: float = 1.0,
    logits: bool = False,
) -> Node:
    """Negative log-likelihood of ``x`` under the decoder output.

    Gaussian: ``sum_t tau/2 ||x_t - phi_t||^2``. Bernoulli: BCE with
    ``phi`` as probabilities, or as logits when ``logits`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    if phi.shape != x.shape:
        raise ShapeError(f"reconstruction of shape {phi.shape} for input {x.shape}")
    if likelihood == "gaussian":
        loss = tape.scale(tape.sum(tape.square(tape.sub(phi, x))), tau / 2.0)
    elif logits:
        loss = tape.sum(tape.bce_with_logits(phi, x))
    else:
        nll = tape.add(tape.mul(tape.log(phi), -x), tape.mul(tape.log(tape.sub(1.0, phi)), x - 1.0))
        loss = tape.sum(nll)
    return tape.scale(loss, 1.0 / _batch_size(phi))


def replay_sample(
    spec: DecoderSpec,
    snapshot: ParamVector,
    task_id: int,
    T: int,
    rng: np.random.Generator,
    n: int = 1,
    likelihood: Likelihood = "bernoulli",
    sampling: Literal["sample", "threshold"] = "sample",
) -> np.ndarray:
    """``n`` synthetic T x F_in input sequences of ``task_id`` from a frozen decoder."""
    weights = spec.bind(tape.constant(snapshot.entries), snapshot.layout)
    z = rng.standard_normal((T, n, spec.n_z))
    phi = decode(spec, weights, z, task_id).value
    if likelihood == "gaussian":
        return phi
    probs = sigmoid_array(phi)
    if sampling == "threshold":
        return (probs >= 0.5).astype(np.float64)
    return (rng.random(probs.shape) < probs).astype(np.float64)


@dataclass(frozen=True)
class RtfWeights:
    distill: float = 1.0
    rec: float = 1.0
    pm: float = 1.0


def rtf_loss(
    learner: Learner,
    spec: DecoderSpec,
    params: Node,
    batches: list[SampleBatch],
    replay: list[SampleBatch],
    weights: RtfWeights,
    rng: np.random.Generator,
    likelihood: Likelihood = "bernoulli",
    tau: float = 1.0,
) -> dict[str, Node]:
    """Replay terms added to the task loss of the current batches.

    ``replay`` holds decoder samples labelled with soft targets (empty for
    the first task). Reconstruction and prior matching run over the
    current and replayed inputs together, with one reparameterized sample
    ``z = mu + sigma * eps`` per input.
    """
    T, F_in = learner.context.copy.T, learner.context.copy.F_in
    for b in [*batches, *replay]:
        if b.x.shape[0] != T or b.x.shape[2] != F_in:
            raise ShapeError(f"batch of shape {b.x.shape} for sequences of {T} x {F_in}")
    terms: dict[str, Node] = {}
    n_replay = sum(b.size for b in replay)
    if replay and weights.distill:
        distill = []
        for b in replay:
            logits, _ = learner.forward(params, b.x, b.task_id)
            distill.append(tape.scale(seq_bce_loss(logits, b, target=b.y), b.size / n_replay))
        terms["distill"] = tape.scale(tape.total(distill), weights.distill)

    if weights.rec or weights.pm:
        dec = spec.bind(params, learner.layout)
        n_all = sum(b.size for b in batches) + n_replay
        rec, pm = [], []
        for b in [*batches, *replay]:
            enc = learner.arch_layout.bind(learner.weights(params, b.task_id))
            trace = run_trunk(learner.arch, enc, b.x, b.task_id)
            mu, logvar = latent_params(learner.arch, enc, trace)
            eps = rng.standard_normal(mu.shape)
            z = tape.add(mu, tape.mul(tape.exp(tape.scale(logvar, 0.5)), eps))
            phi = decode(spec, dec, z, b.task_id)
            share = b.size / n_all
            rec.append(tape.scale(vae_recon_loss(b.x, phi, likelihood, tau, logits=True), share))
            pm.append(tape.scale(vae_prior_match(mu, logvar), share))
        if weights.rec:
            terms["rec"] = tape.scale(tape.total(rec), weights.rec)
        if weights.pm:
            terms["pm"] = tape.scale(tape.total(pm), weights.pm)
    return terms


class GenerativeReplay(Protection):
    name = "rtf"

    def __init__(
        self,
        spec: DecoderSpec,
        weights: RtfWeights,
        likelihood: Likelihood = "bernoulli",
        tau: float = 1.0,
        sampling: Literal["sample", "threshold"] = "sample",
    ):
        self.spec = spec
        self.weights = weights
        self.likelihood = likelihood
        self.tau = tau
        self.sampling = sampling
        self.snapshot: ParamVector | None = None
        self.provider: SoftTargetProvider | None = None
        self.seen: list[int] = []

    def layout(self, base: ParamLayout) -> ParamLayout:
        return base.concat(self.spec.layout())

    def attach(self, learner) -> None:
        super().attach(learner)
        self._rng = rng_stream(learner.context.seed, "replay")

    def init_params(self, params: ParamVector, rng: np.random.Generator) -> None:
        self.spec.init(params, rng)

    def _replay_batches(self, n: int, task_id: int) -> list[SampleBatch]:
        previous = [k for k in self.seen if k != task_id]
        if not previous:
            return []
        copy = self.learner.context.copy
        out = []
        for k, count in zip(previous, split_counts(n, len(previous))):
            if count == 0:
                continue
            x = replay_sample(self.spec, self.snapshot, k, copy.T, self._rng, count, self.likelihood, self.sampling)
            soft = self.provider(x, k)
            weight = np.repeat(copy.loss_weight()[:, None, :], count, axis=1)
            out.append(SampleBatch(x, soft, weight, k))
        return out

    def replay_loss(self, params: Node, batches: list[SampleBatch], task_id: int) -> dict[str, Node]:
        replay = self._replay_batches(sum(b.size for b in batches), task_id)
        return rtf_loss(self.learner, self.spec, params, batches, replay, self.weights, self._rng, self.likelihood, self.tau)

    def on_task_end(self, task_id: int, params: ParamVector) -> None:
        self.snapshot = params.frozen()
        self.provider = SoftTargetProvider(self.learner, self.snapshot)
        self.seen.append(task_id)

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        if self.snapshot is None:
            return {}
        return {"decoder": {v.name: self.snapshot.view(v.name) for v in self.spec.layout()}}

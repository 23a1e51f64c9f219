"""Tape gradients of every training loss against central differences on 16-unit models."""

import numpy as np
import pytest

from rnn_cl_lab.autodiff import finite_diff_check, tape
from rnn_cl_lab.data import CopyConfig, TaskSpec, Variant, gen_batch, make_task_suite
from rnn_cl_lab.methods import EwcState, SiState, build_learner, ewc_penalty, si_penalty
from rnn_cl_lab.models import RNNArch, forward_sequence, init_params, seq_bce_loss
from rnn_cl_lab.models.hnet import HnetConfig, Hypernetwork, checkpoint, generate_weights, hnet_regularizer

TOL = 1e-4
COPY = CopyConfig(p=2, i=2, F_in=3)


def _sample_indices(size: int, rng: np.random.Generator, n: int = 40) -> np.ndarray:
    return np.sort(rng.choice(size, size=min(n, size), replace=False))


@pytest.mark.parametrize("kind", ["vanilla", "lstm"])
def test_sequence_loss(kind, rng):
    arch = RNNArch(kind=kind, n_in=3, n_h=16, n_out=2, n_tasks=2)
    params = init_params(arch, rng)
    batch = gen_batch(COPY, TaskSpec(variant=Variant.BASIC), rng, 3)

    def f(psi):
        logits, _ = forward_sequence(arch, psi, batch.x, 1)
        return seq_bce_loss(logits, batch)

    assert finite_diff_check(f, params.entries, indices=_sample_indices(params.entries.size, rng)) < TOL


def test_masked_sequence_loss(rng):
    arch = RNNArch(n_in=3, n_h=16, n_out=2)
    params = init_params(arch, rng)
    batch = gen_batch(COPY, TaskSpec(variant=Variant.BASIC), rng, 3)
    mask = (rng.random(16) < 0.5).astype(float)

    def f(psi):
        logits, _ = forward_sequence(arch, psi, batch.x, 0, mask)
        return seq_bce_loss(logits, batch)

    assert finite_diff_check(f, params.entries, indices=_sample_indices(params.entries.size, rng)) < TOL


def test_importance_penalties(rng):
    size = 30
    index = np.arange(0, size, 2)
    ewc = EwcState(index=index, lam=0.7, fisher=rng.random(len(index)), anchor=rng.normal(size=len(index)))
    si = SiState.over(index, rng.normal(size=size), lam=1.3)
    si.omega = rng.random(len(index))
    x = rng.normal(size=size)
    assert finite_diff_check(lambda psi: ewc_penalty(psi, ewc), x) < TOL
    assert finite_diff_check(lambda psi: si_penalty(psi, si), x) < TOL


def test_hypernetwork_through_the_main_network(rng):
    arch = RNNArch(n_in=3, n_h=16, n_out=2, n_tasks=2)
    config = HnetConfig(hidden=(6,), task_emb_dim=3, chunk_emb_dim=3, chunk_size=200, max_compression=None)
    hnet = Hypernetwork(config, arch.layout().size, 2)
    theta = hnet.init_params(rng)
    batch = gen_batch(COPY, TaskSpec(variant=Variant.BASIC), rng, 2)
    ckpt = checkpoint(hnet, theta, 1)
    theta.entries[:] += 0.01 * rng.normal(size=theta.entries.size)

    def f(node):
        logits, _ = forward_sequence(arch, generate_weights(hnet, node, 1), batch.x, 1)
        return tape.add(seq_bce_loss(logits, batch), hnet_regularizer(hnet, node, ckpt, 0.5))

    assert finite_diff_check(f, theta.entries, indices=_sample_indices(theta.entries.size, rng)) < TOL


def test_replay_composite(make_config, rng):
    config = make_config("rtf", model={"n_h": 16})
    e = config.experiment
    learner = build_learner(config, make_task_suite(e.variant, e.K, config.copy_config(), e.r, e.seed))
    params = learner.init_params(rng)
    learner.on_task_end(0, params)
    batches = learner.train_batches([1], {1: np.random.default_rng(5)}, 2)
    replay = learner.protections[0]

    def f(node):
        # same latent noise and replayed inputs on every evaluation
        replay._rng = np.random.default_rng(11)
        return tape.total(learner.loss_terms(node, batches, 1, orth_reg=0.5).values())

    assert finite_diff_check(f, params.entries, indices=_sample_indices(params.entries.size, rng)) < TOL


def test_masked_learner_with_orthogonal_penalty(make_config, rng):
    config = make_config("masking", model={"n_h": 16}, method={"name": "masking", "masked_fraction": 0.5})
    e = config.experiment
    learner = build_learner(config, make_task_suite(e.variant, e.K, config.copy_config(), e.r, e.seed))
    params = learner.init_params(rng)
    batches = learner.train_batches([1], {1: np.random.default_rng(5)}, 2)
    W = learner.layout["rnn.W_hh"]
    indices = np.concatenate([np.arange(W.offset, W.offset + 16), _sample_indices(params.entries.size, rng, 24)])

    def f(node):
        return tape.total(learner.loss_terms(node, batches, 1, orth_reg=0.5).values())

    assert finite_diff_check(f, params.entries, indices=np.unique(indices)) < TOL

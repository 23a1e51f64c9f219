import numpy as np
import pytest

from rnn_cl_lab.autodiff import ParamLayout, ParamVector, orthogonal_reg, tape
from rnn_cl_lab.autodiff.tape import sigmoid_array
from rnn_cl_lab.data import CopyConfig, TaskSpec, Variant, gen_batch, make_task_suite
from rnn_cl_lab.data.copytask import SampleBatch
from rnn_cl_lab.errors import ConfigError, DataError, ShapeError
from rnn_cl_lab.methods import (
    DecoderSpec,
    EwcState,
    MaskSet,
    SiState,
    build_learner,
    coreset_build,
    distill_loss,
    ewc_accumulate_fisher,
    ewc_penalty,
    mask_generate,
    replay_sample,
    si_consolidate,
    si_penalty,
    si_track_step,
    split_counts,
    vae_prior_match,
    vae_recon_loss,
)
from rnn_cl_lab.methods.masking import masked_count
from rnn_cl_lab.models import seq_bce_loss
from rnn_cl_lab.training import train_phase


def _learner(config):
    e = config.experiment
    return build_learner(config, make_task_suite(e.variant, e.K, config.copy_config(), e.r, e.seed))


def test_ewc_fisher_is_the_mean_squared_gradient():
    params = ParamVector(ParamLayout([("w", (3,))]), np.zeros(3))
    state = EwcState.over(np.array([0, 2]), lam=1.0)
    grads = [np.array([1.0, 5.0, 2.0]), np.array([3.0, 5.0, 0.0])]
    nll_fns = [lambda node, g=g: tape.sum(tape.mul(node, g)) for g in grads]
    fisher = ewc_accumulate_fisher(state, params, nll_fns)
    np.testing.assert_allclose(fisher, [5.0, 2.0])
    np.testing.assert_array_equal(state.anchor, [0.0, 0.0])

    ewc_accumulate_fisher(state, params, nll_fns)
    np.testing.assert_allclose(state.fisher, [10.0, 4.0])
    assert state.n_tasks == 2
    np.testing.assert_allclose(state.full(3), [10.0, 0.0, 4.0])


def test_ewc_fisher_of_a_one_weight_bernoulli_model():
    w, x = 0.7, 1.5
    params = ParamVector(ParamLayout([("w", (1,))]), np.array([w]))
    weight = np.ones((1, 1, 1))

    def nll(y: float):
        batch = SampleBatch(np.full((1, 1, 1), x), np.full((1, 1, 1), y), weight, 0)
        return lambda node: seq_bce_loss(tape.reshape(tape.scale(node, x), (1, 1, 1)), batch)

    s = sigmoid_array(np.array([w * x]))[0]
    one = ewc_accumulate_fisher(EwcState.over(np.array([0]), 1.0), params, [nll(1.0)])
    assert one[0] == pytest.approx((1.0 - s) ** 2 * x**2, abs=1e-10)
    two = ewc_accumulate_fisher(EwcState.over(np.array([0]), 1.0), params, [nll(1.0), nll(0.0)])
    assert two[0] == pytest.approx(((1.0 - s) ** 2 + s**2) * x**2 / 2.0, abs=1e-10)


def test_ewc_fisher_needs_samples():
    params = ParamVector(ParamLayout([("w", (1,))]))
    with pytest.raises(DataError):
        ewc_accumulate_fisher(EwcState.over(np.array([0]), 1.0), params, [])


def test_ewc_penalty():
    state = EwcState(index=np.array([0, 1]), lam=0.5, fisher=np.ones(2), anchor=np.zeros(2))
    assert ewc_penalty(tape.constant([1.0, 0.0]), state).item() == pytest.approx(0.5)
    assert ewc_penalty(tape.constant([0.0, 0.0]), state).item() == 0.0
    assert ewc_penalty(tape.constant([1.0, 0.0]), EwcState.over(np.array([0, 1]), 0.5)).item() == 0.0


def test_si_importance_from_a_still_parameter():
    state = SiState.over(np.array([0]), np.zeros(1), lam=1.0, epsilon=1e-3)
    si_track_step(state, np.array([-1.0]), np.array([1.0]))
    np.testing.assert_allclose(state.omega_running, [1.0])
    increment = si_consolidate(state, np.zeros(1))
    np.testing.assert_allclose(increment, [1000.0])
    np.testing.assert_allclose(state.omega, [1000.0])
    assert not state.omega_running.any()


def test_si_negative_running_importance_is_clamped():
    state = SiState.over(np.array([0, 1]), np.zeros(2))
    si_track_step(state, np.array([1.0, -1.0]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(si_consolidate(state, np.array([1.0, 1.0])), [0.0, 1.0 / 1.001])


def test_si_squared_denominator():
    state = SiState.over(np.array([0]), np.zeros(1), denominator="squared")
    si_track_step(state, np.array([-2.0]), np.array([1.0]))
    np.testing.assert_allclose(si_consolidate(state, np.array([-2.0])), [2.0 / 4.001])


def test_si_importance_only_grows():
    state = SiState.over(np.arange(3), np.zeros(3))
    rng = np.random.default_rng(0)
    previous = state.omega.copy()
    for _ in range(4):
        si_track_step(state, rng.normal(size=3), rng.normal(size=3))
        si_consolidate(state, rng.normal(size=3))
        assert np.all(state.omega >= previous)
        previous = state.omega.copy()


def test_si_penalty_and_shape_check():
    state = SiState.over(np.array([0]), np.zeros(1))
    state.omega = np.array([2.0])
    assert si_penalty(tape.constant([1.0]), state).item() == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        si_track_step(state, np.zeros(2), np.zeros(2))


def test_mask_counts_and_determinism():
    mask = mask_generate(10, 0.8, task_id=0, master_seed=0)
    assert mask.sum() == 2
    np.testing.assert_array_equal(mask, mask_generate(10, 0.8, task_id=0, master_seed=0))
    assert masked_count(5, 0.5) == 3
    assert mask_generate(7, 0.0, 1, 0).sum() == 7
    assert mask_generate(7, 1.0, 1, 0).sum() == 0
    with pytest.raises(ConfigError):
        mask_generate(10, 1.5, 0, 0)


def test_mask_set_checks_shapes():
    with pytest.raises(ShapeError):
        MaskSet(4, masks={0: np.ones(3)})
    masks = MaskSet(4, 0.5, seed=3)
    assert masks.get(2) is masks.get(2)


def test_coreset_is_reproducible_and_read_only():
    config = CopyConfig(p=2, i=2, F_in=3)
    dataset = gen_batch(config, TaskSpec(variant=Variant.BASIC), np.random.default_rng(0), 30)
    a = coreset_build(dataset, 5, np.random.default_rng(1))
    b = coreset_build(dataset, 5, np.random.default_rng(1))
    assert a.size == 5
    np.testing.assert_array_equal(a.x, b.x)
    with pytest.raises(ValueError):
        a.x[0, 0, 0] = 1.0
    with pytest.raises(DataError):
        coreset_build(dataset, 31, np.random.default_rng(1))


def test_distill_loss():
    weight = np.zeros((2, 1, 1))
    weight[1] = 1.0
    replay = SampleBatch(np.zeros((2, 1, 2)), np.zeros((2, 1, 1)), weight, 0)
    soft = np.full((2, 1, 1), 0.5)
    logits = tape.constant(np.zeros((2, 1, 1)))
    assert distill_loss(logits, replay, soft, 2.0).item() == pytest.approx(2.0 * np.log(2.0))
    assert distill_loss(logits, replay, soft, 0.0).item() == 0.0


def test_prior_match_and_reconstruction():
    assert vae_prior_match(tape.constant(np.ones((1, 1, 1))), tape.constant(np.zeros((1, 1, 1)))).item() == pytest.approx(0.5)
    assert vae_prior_match(tape.constant(np.zeros((3, 2, 4))), tape.constant(np.zeros((3, 2, 4)))).item() == 0.0

    x = np.ones((2, 2, 3))
    rec = vae_recon_loss(x, tape.constant(np.zeros((2, 2, 3))), "gaussian", tau=2.0)
    assert rec.item() == pytest.approx(12.0 / 2)
    half = vae_recon_loss(x, tape.constant(np.full((2, 2, 3), 0.5)), "bernoulli")
    assert half.item() == pytest.approx(6 * np.log(2.0))
    with pytest.raises(ShapeError):
        vae_recon_loss(x, tape.constant(np.zeros((2, 2, 2))))


def test_split_counts():
    assert split_counts(7, 3) == [3, 2, 2]
    assert sum(split_counts(64, 5)) == 64


def test_multitask_minibatches_are_balanced(make_config):
    config = make_config("multitask", experiment={"K": 3}, optim={"batch_size": 64, "iters_per_task": 2})
    learner = _learner(config)
    drawn = []
    draw = learner.train_batches

    def recording(tasks, rngs, n):
        batches = draw(tasks, rngs, n)
        drawn.append({b.task_id: b.size for b in batches})
        return batches

    learner.train_batches = recording
    train_phase(learner, learner.init_params(np.random.default_rng(0)), [0, 1, 2], config.optim, 0)
    assert len(drawn) == 6
    for counts in drawn:
        assert set(counts) == {0, 1, 2}
        assert sum(counts.values()) == 64
        assert max(counts.values()) - min(counts.values()) <= 1


def test_method_composition(make_config):
    learner = _learner(make_config("masking_si", method={"name": "masking_si", "masked_fraction": 0.5}))
    assert [p.name for p in learner.protections] == ["masking", "si"]
    assert learner.wants_task_grad
    assert learner.hidden_mask(0).sum() == 4
    assert learner.hidden_mask(1).shape == (8,)


def test_trainable_mask_freezes_other_heads(make_config):
    learner = _learner(make_config())
    mask = learner.trainable_mask([0])
    layout = learner.layout
    head1 = layout["head.1.W"]
    assert not mask[head1.offset : head1.stop].any()
    assert mask[layout["head.0.W"].offset]
    assert mask[layout["rnn.W_hh"].offset]
    shared = learner.shared_mask()
    assert not shared[head1.offset] and shared[layout["rnn.W_hh"].offset]


def test_masked_units_receive_no_updates(make_config):
    learner = _learner(make_config("masking", method={"name": "masking", "masked_fraction": 0.5}))
    params = learner.init_params(np.random.default_rng(0))
    batches = learner.train_batches([0], {0: np.random.default_rng(1)}, 6)
    node = params.node("psi")
    grads = tape.backward(learner.task_loss(node, batches), {"psi": node})["psi"]
    off = learner.hidden_mask(0) == 0
    W_hh = ParamVector(learner.layout, grads).view("rnn.W_hh")
    assert not W_hh[off].any() and not W_hh[:, off].any()


def test_orthogonal_penalty_stays_on_the_active_block(make_config):
    learner = _learner(make_config("masking", method={"name": "masking", "masked_fraction": 0.5}))
    params = learner.init_params(np.random.default_rng(0))
    batches = learner.train_batches([1], {1: np.random.default_rng(1)}, 4)
    node = params.node("psi")
    orth = learner.loss_terms(node, batches, 1, orth_reg=1.0)["orth"]
    grads = ParamVector(learner.layout, tape.backward(orth, {"psi": node})["psi"])

    on = np.flatnonzero(learner.hidden_mask(1))
    off = learner.hidden_mask(1) == 0
    W = params.view("rnn.W_hh")
    expected = orthogonal_reg(tape.constant(W[np.ix_(on, on)]), 1.0).item()
    assert orth.item() == pytest.approx(expected)
    G = grads.view("rnn.W_hh")
    assert not G[off].any() and not G[:, off].any()
    assert np.count_nonzero(grads.entries) == np.count_nonzero(G)


def test_ewc_learner_consolidates(make_config):
    learner = _learner(make_config("ewc"))
    params = learner.init_params(np.random.default_rng(0))
    batches = learner.train_batches([0], {0: np.random.default_rng(1)}, 4)
    assert set(learner.loss_terms(params.node("psi"), batches, 0)) == {"task"}
    learner.on_task_end(0, params)
    ewc = learner.protections[0]
    assert ewc.state.n_tasks == 1
    assert ewc.state.fisher.shape == (int(learner.shared_mask().sum()),)
    assert ewc_penalty(params.node("psi"), ewc.state).item() == 0.0
    assert "ewc" in learner.state_arrays()


def test_coreset_learner_replays_previous_tasks(make_config):
    learner = _learner(make_config("coresets", method={"name": "coresets", "coreset_size": 5}))
    params = learner.init_params(np.random.default_rng(0))
    batches = learner.train_batches([0], {0: np.random.default_rng(1)}, 4)
    assert learner.protections[0].replay_loss(params.node("psi"), batches, 0) == {}
    learner.on_task_end(0, params)
    assert learner.protections[0].coresets[0].size == 5
    batches = learner.train_batches([1], {1: np.random.default_rng(2)}, 4)
    terms = learner.loss_terms(params.node("psi"), batches, 1)
    assert set(terms) == {"task", "distill"}
    assert np.isfinite(terms["distill"].item())


def test_from_scratch_keeps_each_task(make_config):
    learner = _learner(make_config("from_scratch"))
    params = learner.init_params(np.random.default_rng(0))
    learner.on_task_end(0, params)
    fresh = learner.on_task_start(1, params)
    assert not np.array_equal(fresh.entries, params.entries)
    np.testing.assert_array_equal(learner.eval_params(0, fresh).entries, params.entries)
    assert learner.eval_params(1, fresh) is fresh


def test_hnet_learner_generates_the_main_network(make_config):
    learner = _learner(make_config("hnet"))
    params = learner.init_params(np.random.default_rng(0))
    assert not learner.shared_mask().any()
    assert learner.trainable_mask([0]).all()
    assert learner.weights(params, 1).shape == (learner.arch_layout.size,)
    assert "hnet" not in learner.loss_terms(params.node("psi"), learner.train_batches([0], {0: np.random.default_rng(1)}, 2), 0)
    learner.on_task_end(0, params)
    terms = learner.loss_terms(params.node("psi"), learner.train_batches([1], {1: np.random.default_rng(1)}, 2), 1)
    assert terms["hnet"].item() == 0.0


def test_rtf_learner_terms(make_config):
    learner = _learner(make_config("rtf"))
    params = learner.init_params(np.random.default_rng(0))
    batches = learner.train_batches([0], {0: np.random.default_rng(1)}, 3)
    first = learner.loss_terms(params.node("psi"), batches, 0)
    assert set(first) == {"task", "rec", "pm"}
    learner.on_task_end(0, params)
    batches = learner.train_batches([1], {1: np.random.default_rng(2)}, 3)
    second = learner.loss_terms(params.node("psi"), batches, 1)
    assert set(second) == {"task", "distill", "rec", "pm"}
    assert all(np.isfinite(t.item()) for t in second.values())


def test_replay_sample_from_a_fixed_decoder():
    spec = DecoderSpec(n_z=2, n_dec=3, n_tasks=2, n_out=4)
    snapshot = ParamVector(spec.layout())
    snapshot.set("dec.b_out", np.array([-5.0, 5.0, -5.0, 5.0]))
    snapshot = snapshot.frozen()
    rng = np.random.default_rng(0)

    x = replay_sample(spec, snapshot, 1, 6, rng, n=3, sampling="threshold")
    assert x.shape == (6, 3, 4)
    np.testing.assert_array_equal(x, np.broadcast_to([0.0, 1.0, 0.0, 1.0], (6, 3, 4)))

    phi = replay_sample(spec, snapshot, 0, 2, rng, n=1, likelihood="gaussian")
    np.testing.assert_array_equal(phi[:, 0], [[-5.0, 5.0, -5.0, 5.0]] * 2)

    sampled = replay_sample(spec, snapshot, 0, 0, rng, n=2)
    assert sampled.shape == (0, 2, 4)

import numpy as np
import pytest
from pydantic import ValidationError

from rnn_cl_lab.data import (
    CopyConfig,
    TaskSpec,
    Variant,
    bit_accuracy,
    dump_samples,
    gen_batch,
    gen_sample,
    load_samples,
    make_task_suite,
)
from rnn_cl_lab.data.copytask import targets_from_pattern
from rnn_cl_lab.errors import DataError
from rnn_cl_lab.seeding import rng_stream

BASIC = TaskSpec(variant=Variant.BASIC)


def test_minimal_sample_layout():
    config = CopyConfig(p=1, i=1, F_in=2)
    s = gen_sample(config, BASIC, np.random.default_rng(0))
    b = s.x[0, 0]
    np.testing.assert_array_equal(s.x, [[b, 0.0], [0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(s.y, [[0.0], [0.0], [b]])
    np.testing.assert_array_equal(s.loss_weight, [[0.0], [0.0], [1.0]])


def test_padded_sample_structure():
    config = CopyConfig(p=3, i=6, F_in=4)
    batch = gen_batch(config, TaskSpec(variant=Variant.PADDED), np.random.default_rng(1), 50)
    assert batch.x.shape == (10, 50, 4)
    assert set(np.unique(batch.x)) <= {0.0, 1.0}
    np.testing.assert_array_equal(batch.x[:, :, 3].sum(axis=0), np.ones(50))
    assert np.all(batch.x[6, :, 3] == 1.0)
    assert not batch.x[3:, :, :3].any()
    assert not batch.y[:7].any()
    np.testing.assert_array_equal(batch.y[7:], batch.x[:3, :, :3])


def test_identity_permutation_matches_basic():
    config = CopyConfig(p=4, i=4, F_in=3)
    permuted = TaskSpec(variant=Variant.PERMUTED, permutations=((0, 1, 2, 3),))
    a = gen_batch(config, BASIC, np.random.default_rng(7), 5)
    b = gen_batch(config, permuted, np.random.default_rng(7), 5)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_permuted_recall_is_a_rearrangement():
    config = CopyConfig(p=5, i=5, F_in=4)
    spec = make_task_suite("permuted", 1, config, master_seed=3)[0]
    batch = gen_batch(config, spec, np.random.default_rng(2), 20)
    recalled = np.sort(batch.y[config.recall], axis=0)
    np.testing.assert_array_equal(recalled, np.sort(batch.x[: config.p, :, : config.F_out], axis=0))
    perm = spec.permutations[0]
    for t in range(config.p):
        np.testing.assert_array_equal(batch.y[config.i + 1 + perm[t]], batch.x[t, :, : config.F_out])


def test_patman_xor_examples():
    identity = TaskSpec(variant=Variant.PATMAN, r=1, permutations=((0, 1),))
    pattern = np.array([[[1.0]], [[0.0]]])
    assert not targets_from_pattern(pattern, identity).any()

    swap = TaskSpec(variant=Variant.PATMAN, r=1, permutations=((1, 0),))
    np.testing.assert_array_equal(targets_from_pattern(pattern, swap).reshape(-1), [1.0, 1.0])


def test_patman_cancellation_forms():
    rng = np.random.default_rng(5)
    pattern = rng.integers(0, 2, size=(4, 6, 3)).astype(float)
    perm = (2, 0, 3, 1)
    even = TaskSpec(variant=Variant.PATMAN, r=2, permutations=(perm, perm))
    np.testing.assert_array_equal(targets_from_pattern(pattern, even), pattern)
    odd = TaskSpec(variant=Variant.PATMAN, r=3, permutations=((0, 1, 2, 3),) * 3)
    assert not targets_from_pattern(pattern, odd).any()


def test_task_suite_is_reproducible():
    config = CopyConfig(p=5, i=5)
    a = make_task_suite("permuted", 5, config, master_seed=11)
    b = make_task_suite("permuted", 5, config, master_seed=11)
    assert a == b
    for spec in a:
        assert sorted(spec.permutations[0]) == list(range(5))
    assert [s.task_id for s in a] == [0, 1, 2, 3, 4]
    patman = make_task_suite("patman", 2, config, r=3)
    assert all(len(s.permutations) == 3 and s.r == 3 for s in patman)


def test_suite_needs_a_task():
    with pytest.raises(DataError):
        make_task_suite("basic", 0, CopyConfig())


def test_invalid_specs_are_rejected():
    with pytest.raises(ValidationError):
        CopyConfig(p=5, i=4)
    with pytest.raises(ValidationError):
        TaskSpec(variant=Variant.PERMUTED, permutations=((0, 0, 1),))
    with pytest.raises(ValidationError):
        TaskSpec(variant=Variant.BASIC, r=1)
    with pytest.raises(DataError):
        gen_batch(CopyConfig(p=3, i=3), TaskSpec(variant=Variant.PERMUTED, permutations=((1, 0),)), np.random.default_rng(), 1)


def test_bit_accuracy():
    config = CopyConfig(p=4, i=4, F_in=5)
    s = gen_sample(config, BASIC, np.random.default_rng(9))
    perfect = np.where(s.y > 0.5, 10.0, -10.0)
    assert bit_accuracy(perfect, s) == 1.0
    assert bit_accuracy(-perfect, s) == 0.0
    half = perfect.copy()
    window = config.recall
    half[window, :2] *= -1.0
    assert bit_accuracy(half, s) == pytest.approx(0.5)


def test_bit_accuracy_needs_a_recall_window():
    config = CopyConfig(p=1, i=1, F_in=2)
    s = gen_sample(config, BASIC, np.random.default_rng(0))
    empty = type(s)(s.x, s.y, np.zeros_like(s.loss_weight), s.task_id)
    with pytest.raises(DataError):
        bit_accuracy(np.zeros_like(s.y), empty)


def test_generation_is_a_function_of_the_stream():
    config = CopyConfig()
    a = gen_batch(config, BASIC, rng_stream(0, "data", 1), 4)
    b = gen_batch(config, BASIC, rng_stream(0, "data", 1), 4)
    c = gen_batch(config, BASIC, rng_stream(0, "data", 2), 4)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)


def test_sample_dump_reads_back(tmp_path):
    config = CopyConfig(p=2, i=3, F_in=3)
    batch = gen_batch(config, TaskSpec(variant=Variant.PADDED, task_id=1), np.random.default_rng(4), 3)
    path = tmp_path / "samples.jsonl"
    assert dump_samples(path, [batch.sample(n) for n in range(3)]) == 3
    loaded = load_samples(path)
    assert len(loaded) == 3
    assert loaded[2].task_id == 1
    np.testing.assert_array_equal(loaded[2].x, batch.x[:, 2])
    np.testing.assert_array_equal(loaded[0].loss_weight, batch.loss_weight[:, 0])

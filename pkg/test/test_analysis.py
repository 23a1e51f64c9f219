import numpy as np
import pandas as pd
import pytest

from rnn_cl_lab.analysis import (
    explained_variance,
    fisher_stats,
    head_similarity_matrix,
    head_subspace,
    head_subspace_similarity,
    importance_stats,
    intrinsic_dim_profile,
    pca_intrinsic_dim,
    similarity_matrix,
)
from rnn_cl_lab.analysis.experiments import analyze
from rnn_cl_lab.autodiff import ParamVector, orthogonal_init
from rnn_cl_lab.errors import DataError, ShapeError
from rnn_cl_lab.models import RNNArch, forward_sequence, init_params


def test_rank_one_states_have_dimension_one(rng):
    H = np.outer(rng.normal(size=50), rng.normal(size=6))
    assert pca_intrinsic_dim(H) == 1


def test_equal_variance_directions():
    e = np.eye(5)[:3]
    H = np.concatenate([e, -e])
    assert pca_intrinsic_dim(H, 0.75) == 3
    assert pca_intrinsic_dim(H, 0.5) == 2


def test_full_threshold_gives_the_rank(rng):
    H = rng.normal(size=(40, 4)) @ rng.normal(size=(4, 8))
    assert pca_intrinsic_dim(H, 1.0) == 4


def test_dimension_is_invariant_to_rotation_and_offset(rng):
    H = rng.normal(size=(60, 5)) * np.array([5.0, 3.0, 1.0, 0.5, 0.1])
    Q = orthogonal_init(5, 5, rng)
    for threshold in (0.5, 0.75, 0.9):
        assert pca_intrinsic_dim(H @ Q + 7.0, threshold) == pca_intrinsic_dim(H, threshold)


def test_constant_states_and_too_few_samples():
    assert pca_intrinsic_dim(np.full((10, 4), 0.3)) == 0
    with pytest.raises(DataError):
        explained_variance(np.zeros((1, 4)))
    with pytest.raises(DataError):
        explained_variance(np.zeros(4))


def test_explained_variance_is_sorted_and_sums_to_the_trace(rng):
    H = rng.normal(size=(30, 10))
    var = explained_variance(H)
    assert np.all(np.diff(var) <= 1e-12)
    assert var.sum() == pytest.approx(np.trace(np.cov(H, rowvar=False)))
    wide = explained_variance(rng.normal(size=(4, 10)))
    assert wide.shape == (4,)


def test_profile_over_a_trace(rng):
    arch = RNNArch(n_in=3, n_h=6, n_out=2)
    _, trace = forward_sequence(arch, init_params(arch, rng), rng.integers(0, 2, size=(5, 20, 3)).astype(float), 0)
    profile = intrinsic_dim_profile(trace)
    assert len(profile) == 6
    assert profile[0] == 0
    assert all(0 <= d <= 6 for d in profile)
    assert intrinsic_dim_profile(trace.states()) == profile


def test_importance_stats():
    arch = RNNArch(n_in=2, n_h=3, n_out=1)
    layout = arch.layout()
    values = np.zeros(layout.size)
    W = layout["rnn.W_hh"]
    values[W.offset : W.stop] = np.arange(9.0)
    stats = fisher_stats(values, layout, bins=3)
    assert stats.view == "rnn.W_hh"
    assert stats.mean == pytest.approx(4.0)
    assert stats.max == 8.0
    assert stats.counts == [3, 3, 3]
    assert len(stats.edges) == 4
    with pytest.raises(ShapeError):
        importance_stats(values[:-1], layout)
    with pytest.raises(ShapeError):
        importance_stats(values, layout, view="rnn.nope")


def test_head_subspace_thresholds_small_directions():
    W = np.zeros((3, 6))
    W[0, 0], W[1, 1], W[2, 2] = 3.0, 2.0, 0.01
    assert head_subspace(W, 0.05).shape == (2, 6)
    assert head_subspace(W, 0.0).shape == (3, 6)
    assert head_subspace(np.zeros((3, 6))).shape == (0, 6)


def test_head_similarity():
    W = np.zeros((3, 6))
    W[0, 0], W[1, 1], W[2, 2] = 3.0, 2.0, 1.0
    other = np.zeros((3, 6))
    other[0, 3], other[1, 4], other[2, 5] = 1.0, 1.0, 1.0
    assert head_subspace_similarity(W, W) == pytest.approx(np.sqrt(3.0))
    assert head_subspace_similarity(W, other) == pytest.approx(0.0, abs=1e-12)
    S = similarity_matrix([W, other, W + other])
    np.testing.assert_allclose(S, S.T)
    np.testing.assert_allclose(np.diag(S), np.sqrt(3.0))


def test_head_similarity_matrix_from_parameters(rng):
    arch = RNNArch(n_in=3, n_h=8, n_out=2, n_tasks=3)
    S = head_similarity_matrix(init_params(arch, rng), 3)
    assert S.shape == (3, 3)
    np.testing.assert_allclose(S, S.T)
    np.testing.assert_allclose(np.diag(S), np.sqrt(2.0))

    single = RNNArch(n_in=3, n_h=8, n_out=2, n_tasks=3, single_head=True)
    params = ParamVector(single.layout(), init_params(single, rng).entries)
    np.testing.assert_allclose(head_similarity_matrix(params, 3), np.sqrt(2.0))


def test_analyze_writes_tables(make_config, tmp_path):
    config = make_config(analysis={"p_values": "2", "i_values": "2,4", "seeds": "0"})
    pca = analyze("pca", config, tmp_path / "pca")
    assert [p.name for p in pca] == ["pca.csv", "pca_basic.svg", "pca_padded.svg"]
    table = pd.read_csv(pca[0])
    assert set(table["i"]) == {2, 4}
    assert table["stop"].sum() == 3

    fisher = analyze("fisher", config, tmp_path / "fisher")
    table = pd.read_csv(fisher[0])
    assert len(table) == 3
    assert (table["mean_fisher"] >= 0).all() and (table["mean_si"] >= 0).all()

    subspace = pd.read_csv(analyze("subspace", config, tmp_path / "subspace")[0])
    assert len(subspace) == 4

    interference, queue = (pd.read_csv(p) for p in analyze("theory", config, tmp_path / "theory"))
    assert sorted(set(interference["K"])) == [1, 2, 4, 8]
    assert (queue["accuracy"] == 1.0).all()
    with pytest.raises(ValueError):
        analyze("nope", config, tmp_path)

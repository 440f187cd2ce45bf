import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import best_bipartition

from cafe import (
    FeatureStats,
    GroupPartition,
    InvalidInput,
    compute_feature_stats,
    correlation_adjacency,
    extract_group_stats,
    max_group_size,
    spectral_cluster,
)
from cafe.grouping import DegenerateDimensionWarning, kmeans


def _stats(cov, mean=None):
    cov = np.asarray(cov, dtype=float)
    return FeatureStats(np.zeros(len(cov)) if mean is None else np.asarray(mean, float), cov, 10)


def test_adjacency_of_diagonal_cov_is_identity():
    np.testing.assert_array_equal(correlation_adjacency(_stats(np.diag([2.0, 3.0]))), np.eye(2))


def test_adjacency_perfect_correlation():
    np.testing.assert_array_equal(correlation_adjacency(_stats([[1.0, 1.0], [1.0, 1.0]])), np.ones((2, 2)))
    np.testing.assert_array_equal(correlation_adjacency(_stats([[4.0, -2.0], [-2.0, 1.0]])), np.ones((2, 2)))


def test_adjacency_isolates_zero_variance_dimension():
    cov = np.array([[1.0, 0.0, 0.5], [0.0, 0.0, 0.0], [0.5, 0.0, 1.0]])
    with pytest.warns(DegenerateDimensionWarning):
        a = correlation_adjacency(_stats(cov))
    np.testing.assert_array_equal(a[1], [0.0, 1.0, 0.0])
    assert a[0, 2] == pytest.approx(0.5)


def test_adjacency_properties_on_random_cov(rng):
    x = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
    a = correlation_adjacency(compute_feature_stats(x))
    assert np.all((a >= 0) & (a <= 1))
    np.testing.assert_array_equal(a, a.T)
    np.testing.assert_array_equal(np.diag(a), np.ones(6))


def block_adjacency(sizes, weak=0.0):
    d = sum(sizes)
    a = np.full((d, d), weak)
    start = 0
    for s in sizes:
        a[start:start + s, start:start + s] = 1.0
        start += s
    return a


def test_two_blocks_match_brute_force_normalized_cut():
    adj = block_adjacency([3, 3])
    oracle, _ = best_bipartition(adj)
    assert oracle == ((0, 1, 2), (3, 4, 5))
    assert spectral_cluster(adj, 2, seed=0).canonical() == oracle


def test_weakly_coupled_blocks_match_brute_force(rng):
    adj = block_adjacency([2, 4], weak=0.05)
    perm = rng.permutation(6)
    adj = adj[np.ix_(perm, perm)]
    oracle, _ = best_bipartition(adj)
    assert spectral_cluster(adj, 2, seed=3).canonical() == oracle


def test_k_one_and_k_equal_d():
    adj = block_adjacency([2, 3])
    assert spectral_cluster(adj, 1).canonical() == ((0, 1, 2, 3, 4),)
    assert spectral_cluster(adj, 5).canonical() == tuple((i,) for i in range(5))


def test_k_out_of_range():
    with pytest.raises(InvalidInput):
        spectral_cluster(np.eye(3), 4)
    with pytest.raises(InvalidInput):
        spectral_cluster(np.eye(3), 0)


def test_deterministic_for_seed(rng):
    x = rng.normal(size=(200, 12)) @ rng.normal(size=(12, 12))
    adj = correlation_adjacency(compute_feature_stats(x))
    assert spectral_cluster(adj, 4, seed=7) == spectral_cluster(adj, 4, seed=7)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.integers(1, 4), min_size=1, max_size=4),
    st.integers(0, 3),
    st.integers(0, 2**16),
)
def test_block_structure_never_mixed(sizes, extra, seed):
    d = sum(sizes)
    k = min(d, len(sizes) + extra)
    perm = np.random.default_rng(seed).permutation(d)
    adj = block_adjacency(sizes)[np.ix_(perm, perm)]
    part = spectral_cluster(adj, k, seed=seed)
    block_of = np.repeat(np.arange(len(sizes)), sizes)[perm]
    assert part.k == k
    assert sorted(np.concatenate(part.groups).tolist()) == list(range(d))
    for g in part.groups:
        assert len(set(block_of[g])) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**16))
def test_partition_is_true_partition_on_random_graphs(d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, d)) @ rng.normal(size=(d, d))
    adj = correlation_adjacency(compute_feature_stats(x))
    k = int(rng.integers(1, d + 1))
    part = spectral_cluster(adj, k, seed=seed)
    assert part.k == k
    assert all(g.size > 0 for g in part.groups)
    np.testing.assert_array_equal(np.sort(np.concatenate(part.groups)), np.arange(d))


def test_kmeans_repairs_empty_clusters():
    # five identical points cannot seed five distinct clusters
    pts = np.vstack([np.zeros((5, 2)), np.ones((1, 2))])
    labels, _ = kmeans(pts, 4, seed=0)
    assert np.all(np.bincount(labels, minlength=4) > 0)


def test_partition_validation_and_canonical_form():
    a = GroupPartition(((3, 1), (0, 2)))
    assert a.canonical() == ((0, 2), (1, 3))
    assert a == GroupPartition.from_assignment([5, 9, 5, 9])
    np.testing.assert_array_equal(a.assignment, [0, 1, 0, 1])
    with pytest.raises(InvalidInput):
        GroupPartition(((0, 1), (1, 2)))
    with pytest.raises(InvalidInput):
        GroupPartition(((0,), (2,)))
    with pytest.raises(InvalidInput):
        GroupPartition(((0,), ()))


def test_extract_group_stats():
    s = _stats(np.diag([1.0, 1.0]), mean=[5.0, 7.0])
    groups = extract_group_stats(s, GroupPartition.singletons(2))
    assert [g[0].tolist() for g in groups] == [[5.0], [7.0]]
    cov = np.array([[1.0, 2, 0], [2, 9, 0], [0, 0, 4]])
    s3 = _stats(cov, mean=[1.0, 2.0, 3.0])
    (mu, sub), (_, last) = extract_group_stats(s3, GroupPartition(((0, 1), (2,))))
    np.testing.assert_array_equal(sub, [[1, 2], [2, 9]])
    np.testing.assert_array_equal(last, [[4.0]])
    (full_mu, full_cov), = extract_group_stats(s3, GroupPartition(((0, 1, 2),)))
    np.testing.assert_array_equal(full_cov, cov)
    np.testing.assert_array_equal(full_mu, s3.mean)
    with pytest.raises(InvalidInput):
        extract_group_stats(s, GroupPartition(((0, 1, 2),)))


def test_max_group_size():
    assert max_group_size(GroupPartition.singletons(8)) == 1
    assert max_group_size(GroupPartition((tuple(range(8)),))) == 8
    assert max_group_size(GroupPartition(((0, 1, 2), (3, 4, 5, 6, 7)))) == 5

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cafe import FeatureStats, InvalidInput, compute_feature_stats

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
feature_matrices = st.tuples(st.integers(1, 12), st.integers(1, 5)).flatmap(
    lambda shape: arrays(np.float64, shape, elements=finite)
)


def test_single_sample_has_zero_covariance():
    s = compute_feature_stats([[3.0, -1.0]])
    np.testing.assert_array_equal(s.mean, [3.0, -1.0])
    np.testing.assert_array_equal(s.cov, np.zeros((2, 2)))
    assert s.count == 1


def test_two_samples_population_normalization():
    s = compute_feature_stats([[0.0, 0.0], [2.0, 2.0]])
    np.testing.assert_array_equal(s.mean, [1.0, 1.0])
    np.testing.assert_array_equal(s.cov, [[1.0, 1.0], [1.0, 1.0]])


def test_standard_gaussian_sample_matches_recorded_values():
    x = np.random.default_rng(0).standard_normal((10000, 4))
    s = compute_feature_stats(x)
    # recorded with np.mean / np.cov(bias=True) on the same draw
    np.testing.assert_allclose(s.mean, [0.01316342, -0.00354619, -0.00199458, 0.00143071], atol=1e-8)
    np.testing.assert_allclose(np.diag(s.cov), [1.00430322, 0.99265637, 1.00775649, 1.01001056], atol=1e-8)
    np.testing.assert_allclose(s.cov[0, 2], 0.01400866, atol=1e-8)
    assert np.all(np.abs(s.mean) < 0.05)
    assert np.all(np.abs(s.cov - np.eye(4)) < 0.1)


def test_rejects_non_finite():
    with pytest.raises(InvalidInput):
        compute_feature_stats([[1.0, np.nan]])
    with pytest.raises(InvalidInput):
        compute_feature_stats(np.zeros((0, 3)))


def test_stats_are_float64_even_for_float32_input():
    s = compute_feature_stats(np.ones((3, 2), dtype=np.float32))
    assert s.mean.dtype == np.float64 and s.cov.dtype == np.float64
    assert isinstance(s, FeatureStats) and s.dim == 2


@settings(max_examples=60, deadline=None)
@given(feature_matrices)
def test_covariance_is_centered_gram(x):
    s = compute_feature_stats(x)
    xc = x - x.mean(axis=0)
    np.testing.assert_allclose(s.cov, xc.T @ xc / x.shape[0], atol=1e-6, rtol=1e-9)
    np.testing.assert_allclose(s.cov, s.cov.T, atol=1e-10)
    assert np.linalg.eigvalsh(s.cov).min() >= -1e-8 * max(1.0, np.abs(s.cov).max())


@settings(max_examples=40, deadline=None)
@given(feature_matrices)
def test_duplicated_rows_leave_covariance_unchanged(x):
    a = compute_feature_stats(x)
    b = compute_feature_stats(np.vstack([x, x]))
    np.testing.assert_allclose(a.cov, b.cov, atol=1e-7, rtol=1e-9)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(feature_matrices, st.lists(finite, min_size=5, max_size=5))
def test_constant_offset_shifts_mean_only(x, offset):
    c = np.asarray(offset[: x.shape[1]])
    a = compute_feature_stats(x)
    b = compute_feature_stats(x + c)
    np.testing.assert_allclose(b.mean, a.mean + c, atol=1e-9)
    np.testing.assert_allclose(b.cov, a.cov, atol=1e-6)

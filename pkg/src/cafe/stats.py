"""First- and second-order feature statistics."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class FeatureStats:
    """Mean and population covariance of a set of feature vectors.

    Attributes:
        mean: ``(d,)`` float64 mean vector.
        cov: ``(d, d)`` float64 symmetric covariance (1/n normalization).
        count: number of samples the statistics were computed from.
    """

    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self):
        return self.mean.shape[0]


def as_feature_matrix(features):
    """Validate and convert ``features`` to a 2-D float64 array."""
    z = np.asarray(features, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
        raise InvalidInput(f"expected a non-empty (n, d) feature matrix, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInput("feature matrix contains non-finite entries")
    return z


def compute_feature_stats(features):
    """Compute mean and covariance of ``features`` (rows are samples).

    Two passes: the mean first, then centered outer products. The covariance
    uses 1/n normalization and is symmetrized to remove rounding asymmetry.

    >>> s = compute_feature_stats([[0.0, 0.0], [2.0, 2.0]])
    >>> s.mean.tolist(), s.cov.tolist()
    ([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]])
    """
    z = as_feature_matrix(features)
    n = z.shape[0]
    mean = z.mean(axis=0)
    centered = z - mean
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    return FeatureStats(mean=mean, cov=cov, count=n)

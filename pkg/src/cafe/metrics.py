"""Distribution-gap metrics between Gaussian feature summaries."""

import numpy as np

from .errors import NumericalError


def _psd_sqrt(mat, what):
    mat = 0.5 * (mat + mat.T)
    try:
        lam, vecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition of {what} did not converge") from exc
    floor = -1e-8 * max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    if np.any(lam < floor):
        raise NumericalError(f"{what} has a negative eigenvalue {lam.min():.3g}")
    return lam.clip(min=0.0), vecs


def frechet_distance(stats_a, stats_b):
    """``|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`` for two FeatureStats.

    The trace of the product square root is taken from the symmetric matrix
    ``S_b^(1/2) S_a S_b^(1/2)``, which has the same eigenvalues as ``S_a S_b``.

    >>> from cafe.stats import FeatureStats
    >>> a = FeatureStats(np.zeros(1), np.eye(1), 1)
    >>> round(frechet_distance(a, FeatureStats(np.zeros(1), 4 * np.eye(1), 1)), 12)
    1.0
    """
    diff = stats_a.mean - stats_b.mean
    lam_b, vec_b = _psd_sqrt(np.asarray(stats_b.cov, dtype=np.float64), "covariance")
    root_b = (vec_b * np.sqrt(lam_b)) @ vec_b.T
    inner, _ = _psd_sqrt(root_b @ stats_a.cov @ root_b, "covariance product")
    trace = np.trace(stats_a.cov) + np.trace(stats_b.cov) - 2.0 * np.sum(np.sqrt(inner))
    return float(diff @ diff + trace)

"""Grouped symmetric Gaussian KL between a target batch and source statistics.

Each group's statistics are expressed in the eigenbasis of its source
covariance, where the source Gaussian is ``N(0, diag(lambda))`` with
eigenvalues floored at ``epsilon``. The per-group, per-batch work is done by
the kernel in :mod:`cafe.kernels`.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import DegenerateBatch, InvalidInput, NumericalError
from .grouping import GroupPartition, extract_group_stats
from .stats import as_feature_matrix

DEFAULT_EPSILON = 1e-5


def _symmetric(cov, what="matrix"):
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInput(f"{what} must be square, got shape {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov))) if cov.size else 1.0)
    if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-8 * scale:
        raise InvalidInput(f"{what} is not symmetric")
    return 0.5 * (cov + cov.T)


def source_eigh(cov):
    """Eigenpairs of a source covariance, eigenvalues sorted descending.

    Eigenvalues within numerical resolution of zero (``m * eps * max|lambda|``)
    are snapped to exactly zero so rank deficiency is detected reproducibly.
    """
    cov = _symmetric(cov, "source covariance")
    lam, vecs = np.linalg.eigh(cov)
    order = np.argsort(lam, kind="stable")[::-1]
    lam, vecs = lam[order], vecs[:, order]
    tol = cov.shape[0] * np.finfo(np.float64).eps * max(float(np.max(np.abs(lam))), 0.0)
    lam = np.where(np.abs(lam) <= tol, 0.0, lam)
    return vecs, lam


def eigendecompose_and_clip(cov, epsilon=DEFAULT_EPSILON):
    """Return ``(V, lambda)`` with ``lambda_j = max(raw_j, epsilon)``.

    >>> V, lam = eigendecompose_and_clip([[1.0, 1.0], [1.0, 1.0]], 1e-5)
    >>> lam.tolist()
    [2.0, 1e-05]
    """
    vecs, lam = source_eigh(cov)
    return vecs, np.maximum(lam, epsilon)


@dataclass(frozen=True, eq=False)
class GroupedSourceStats:
    """Portable source statistics: one mean/eigenbasis/spectrum per group.

    ``raw_eigenvalues`` are stored unclipped; :attr:`eigenvalues` applies the
    ``epsilon`` floor, so the same file can be adapted with different floors.
    """

    partition: GroupPartition
    means: tuple
    eigvecs: tuple
    raw_eigenvalues: tuple
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidInput(f"epsilon must be >= 0, got {self.epsilon}")
        sizes = self.partition.sizes
        if not (len(self.means) == len(self.eigvecs) == len(self.raw_eigenvalues) == len(sizes)):
            raise InvalidInput("per-group arrays must match the partition")
        for m, mu, vec, lam in zip(sizes, self.means, self.eigvecs, self.raw_eigenvalues):
            if mu.shape != (m,) or lam.shape != (m,) or vec.shape != (m, m):
                raise InvalidInput("per-group array shapes do not match group sizes")

    @property
    def dim(self):
        return self.partition.dim

    @property
    def k(self):
        return self.partition.k

    @property
    def eigenvalues(self):
        return tuple(np.maximum(lam, self.epsilon) for lam in self.raw_eigenvalues)

    def with_epsilon(self, epsilon):
        return GroupedSourceStats(self.partition, self.means, self.eigvecs, self.raw_eigenvalues, epsilon)

    def full_mean(self):
        out = np.empty(self.dim)
        for g, mu in zip(self.partition.groups, self.means):
            out[g] = mu
        return out

    def block_covariance(self):
        """Block-diagonal source covariance reassembled from the raw spectra."""
        out = np.zeros((self.dim, self.dim))
        for g, vec, lam in zip(self.partition.groups, self.eigvecs, self.raw_eigenvalues):
            out[np.ix_(g, g)] = (vec * lam) @ vec.T
        return out

    @cached_property
    def packed(self):
        """Flat arrays in the kernel calling convention."""
        sizes = np.array(self.partition.sizes, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        vec_offsets = np.concatenate([[0], np.cumsum(sizes * sizes)]).astype(np.int64)
        return dict(
            dims=np.ascontiguousarray(np.concatenate(self.partition.groups), dtype=np.int64),
            offsets=offsets,
            means=np.ascontiguousarray(np.concatenate(self.means)),
            eigvecs=np.ascontiguousarray(np.concatenate([v.ravel() for v in self.eigvecs])),
            vec_offsets=vec_offsets,
            eigvals=np.ascontiguousarray(np.concatenate(self.eigenvalues)),
        )


def build_grouped_source_stats(stats, partition, epsilon=DEFAULT_EPSILON):
    """Slice full source statistics by ``partition`` and eigendecompose each block."""
    means, vecs, lams = [], [], []
    for mu, cov in extract_group_stats(stats, partition):
        v, lam = source_eigh(cov)
        means.append(mu.copy())
        vecs.append(v)
        lams.append(lam)
    return GroupedSourceStats(partition, tuple(means), tuple(vecs), tuple(lams), float(epsilon))


@dataclass(frozen=True, eq=False)
class TransformedStats:
    mean: np.ndarray
    cov: np.ndarray


def transform_target_stats(mu_t, cov_t, mu_s, vecs):
    """Express target group statistics in the source eigenbasis.

    ``vecs`` holds eigenvectors as columns, so the mean maps as
    ``V^T (mu_t - mu_s)`` and the covariance as ``V^T cov_t V``.
    """
    vecs = np.asarray(vecs, dtype=np.float64)
    mu_t = np.asarray(mu_t, dtype=np.float64)
    mu_s = np.asarray(mu_s, dtype=np.float64)
    cov_t = np.asarray(cov_t, dtype=np.float64)
    m = vecs.shape[0]
    if vecs.shape != (m, m) or mu_t.shape != (m,) or mu_s.shape != (m,) or cov_t.shape != (m, m):
        raise InvalidInput("inconsistent shapes for group transform")
    cov = vecs.T @ cov_t @ vecs
    return TransformedStats(mean=vecs.T @ (mu_t - mu_s), cov=0.5 * (cov + cov.T))


def _cholesky(cov, group=None):
    cov = np.asarray(cov, dtype=np.float64)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DegenerateBatch("covariance is not positive definite", group=group) from None
    piv = np.diag(chol)
    if piv.size and np.min(piv * piv) <= kernels.PIVOT_RTOL * np.max(np.diag(cov)):
        raise DegenerateBatch("covariance is numerically singular", group=group)
    return chol


def logdet_via_cholesky(cov, group=None):
    """``log det(cov) = 2 * sum(log(diag(L)))`` with ``L L^T = cov``."""
    return float(2.0 * np.sum(np.log(np.diag(_cholesky(cov, group)))))


def group_kl(transformed, eigenvalues, group=None):
    """Both KL directions between ``N(mean, cov)`` and ``N(0, diag(eigenvalues))``.

    Returns ``(kl_target_source, kl_source_target)``.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if np.any(lam <= 0):
        raise NumericalError(
            f"group {group}: source eigenvalue is zero; the alignment loss diverges (use epsilon > 0)"
        )
    mean, cov = transformed.mean, transformed.cov
    m = lam.size
    chol = _cholesky(cov, group)
    logdet_t = 2.0 * np.sum(np.log(np.diag(chol)))
    logdet_s = np.sum(np.log(lam))
    cov_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(m)))
    kl_ts = 0.5 * (logdet_s - logdet_t - m + np.sum(np.diag(cov) / lam) + np.sum(mean**2 / lam))
    kl_st = 0.5 * (logdet_t - logdet_s - m + np.sum(np.diag(cov_inv) * lam) + mean @ cov_inv @ mean)
    return float(kl_ts), float(kl_st)


@dataclass(frozen=True, eq=False)
class AlignmentLossResult:
    loss: float
    per_group_kl_ts: np.ndarray
    per_group_kl_st: np.ndarray
    grad_features: np.ndarray


def feature_alignment_loss(features, grouped_src, want_grad=True, backend=None):
    """Mean over groups of the symmetric KL, and its gradient w.r.t. ``features``.

    Raises :class:`DegenerateBatch` when a group's batch covariance is
    singular (in particular whenever a group is at least as large as the
    batch) and :class:`NumericalError` when a source eigenvalue is zero.
    """
    z = np.ascontiguousarray(as_feature_matrix(features))
    n, d = z.shape
    if d != grouped_src.dim:
        raise InvalidInput(f"features have {d} dims but source stats have {grouped_src.dim}")
    if n < 2:
        raise InvalidInput("alignment loss needs a batch of at least 2 samples")
    p = grouped_src.packed
    kernel = kernels.get_kernel(backend)
    status, bad, kl_ts, kl_st, grad = kernel(
        z, p["dims"], p["offsets"], p["means"], p["eigvecs"], p["vec_offsets"], p["eigvals"], want_grad
    )
    if status == kernels.TARGET_DEGENERATE:
        size = grouped_src.partition.sizes[bad]
        raise DegenerateBatch(f"batch covariance is singular (group size {size}, batch size {n})", group=int(bad))
    if status == kernels.SOURCE_DEGENERATE:
        raise NumericalError(
            f"group {bad}: source eigenvalue is zero; the alignment loss diverges (use epsilon > 0)"
        )
    loss = float(np.mean(0.5 * (kl_ts + kl_st)))
    if not np.isfinite(loss) or (grad is not None and not np.all(np.isfinite(grad))):
        raise NumericalError("alignment loss or gradient is not finite")
    return AlignmentLossResult(loss, kl_ts, kl_st, grad)


def relative_error(analytic, numeric, floor=1e-6):
    """Max relative error over components with magnitude above ``floor``;
    smaller components contribute their absolute error."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    err = np.where(scale > floor, diff / np.where(scale > floor, scale, 1.0), diff)
    return float(err.max(initial=0.0))


def grad_check_alignment(features, grouped_src, h=1e-5, backend=None):
    """Central finite differences on every feature entry vs the analytic gradient."""
    z = np.array(as_feature_matrix(features))
    analytic = feature_alignment_loss(z, grouped_src, backend=backend).grad_features
    numeric = np.empty_like(z)
    for idx in np.ndindex(z.shape):
        orig = z[idx]
        z[idx] = orig + h
        up = feature_alignment_loss(z, grouped_src, want_grad=False, backend=backend).loss
        z[idx] = orig - h
        down = feature_alignment_loss(z, grouped_src, want_grad=False, backend=backend).loss
        z[idx] = orig
        numeric[idx] = (up - down) / (2 * h)
    return relative_error(analytic, numeric)

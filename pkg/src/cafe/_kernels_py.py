"""Pure-numpy grouped alignment kernel (fallback for the compiled one).

Both implementations share one flat-array calling convention so they can be
swapped at import time and cross-checked in tests.
"""

import numpy as np

OK = 0
TARGET_DEGENERATE = 1
SOURCE_DEGENERATE = 2

# A Cholesky pivot at or below PIVOT_RTOL * max(diag) counts as singular.
PIVOT_RTOL = 1e-12


def grouped_alignment(z, dims, offsets, means, eigvecs, vec_offsets, eigvals, want_grad=True):
    """Per-group symmetric Gaussian KL between a feature batch and source stats.

    Parameters
    ----------
    z : (n, d) float64 C-contiguous feature batch.
    dims : int64 concatenated group members; group ``g`` owns
        ``dims[offsets[g]:offsets[g + 1]]``.
    offsets : int64 ``(k + 1,)``.
    means : float64 concatenated source means, aligned with ``dims``.
    eigvecs : float64 concatenated row-major eigenvector matrices (columns are
        eigenvectors); group ``g`` owns ``eigvecs[vec_offsets[g]:vec_offsets[g + 1]]``.
    vec_offsets : int64 ``(k + 1,)``.
    eigvals : float64 concatenated clipped source eigenvalues, aligned with ``dims``.
    want_grad : also return d(loss)/dz for loss = mean_g (kl_ts + kl_st) / 2.

    Returns
    -------
    status, bad_group, kl_ts, kl_st, grad
        ``status`` is ``OK``, ``TARGET_DEGENERATE`` or ``SOURCE_DEGENERATE``;
        ``bad_group`` is the failing group index or -1. ``grad`` is None when
        ``want_grad`` is false.
    """
    n = z.shape[0]
    k = offsets.shape[0] - 1
    kl_ts = np.zeros(k)
    kl_st = np.zeros(k)
    grad = np.zeros_like(z) if want_grad else None
    coef = 1.0 / (2.0 * k)
    for g in range(k):
        lo, hi = offsets[g], offsets[g + 1]
        m = hi - lo
        idx = dims[lo:hi]
        lam = eigvals[lo:hi]
        if np.any(lam <= 0):
            return SOURCE_DEGENERATE, g, kl_ts, kl_st, grad
        if m >= n:
            return TARGET_DEGENERATE, g, kl_ts, kl_st, grad
        vecs = eigvecs[vec_offsets[g]:vec_offsets[g + 1]].reshape(m, m)
        y = (z[:, idx] - means[lo:hi]) @ vecs
        mt = y.mean(axis=0)
        yc = y - mt
        s = yc.T @ yc / n
        s = 0.5 * (s + s.T)
        try:
            chol = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            return TARGET_DEGENERATE, g, kl_ts, kl_st, grad
        piv = np.diag(chol)
        if np.min(piv * piv) <= PIVOT_RTOL * np.max(np.diag(s)):
            return TARGET_DEGENERATE, g, kl_ts, kl_st, grad
        logdet_t = 2.0 * np.sum(np.log(piv))
        logdet_s = np.sum(np.log(lam))
        linv = np.linalg.solve(chol, np.eye(m))
        sinv = linv.T @ linv
        w = sinv @ mt
        kl_ts[g] = 0.5 * (logdet_s - logdet_t - m + np.sum(np.diag(s) / lam) + np.sum(mt * mt / lam))
        kl_st[g] = 0.5 * (logdet_t - logdet_s - m + np.sum(np.diag(sinv) * lam) + mt @ w)
        if want_grad:
            gm = coef * (mt / lam + w)
            gs = 0.5 * coef * (np.diag(1.0 / lam) - (sinv * lam) @ sinv - np.outer(w, w))
            gy = gm / n + (2.0 / n) * yc @ gs
            grad[:, idx] += gy @ vecs.T
    return OK, -1, kl_ts, kl_st, grad

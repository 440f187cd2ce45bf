# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grouped alignment kernel.

Mirrors ``cafe._kernels_py.grouped_alignment`` exactly; see that module for
the calling convention. Small dense linear algebra (projection, covariance,
Cholesky, triangular inverse) is hand-written since groups are tiny.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    OK = 0
    TARGET_DEGENERATE = 1
    SOURCE_DEGENERATE = 2

cdef double PIVOT_RTOL = 1e-12


cdef int _group(
    const double[:, ::1] z,
    const long long[::1] dims,
    const double[::1] means,
    const double[::1] eigvecs,
    const double[::1] eigvals,
    Py_ssize_t lo, Py_ssize_t m, Py_ssize_t voff,
    double coef, bint want_grad,
    double* y, double* mt, double* s, double* L, double* Li, double* si,
    double* w, double* gs, double* gy,
    double* kl_ts_out, double* kl_st_out,
    double[:, ::1] grad,
) noexcept nogil:
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i, a, b, c
    cdef double acc, piv, smax, logdet_t, logdet_s, tr, quad, inv_n
    inv_n = 1.0 / n

    for a in range(m):
        if eigvals[lo + a] <= 0.0:
            return SOURCE_DEGENERATE
    if m >= n:
        return TARGET_DEGENERATE

    # y = (z[:, dims] - mean) @ V, V row-major with eigenvectors in columns
    for b in range(m):
        mt[b] = 0.0
    for i in range(n):
        for b in range(m):
            acc = 0.0
            for a in range(m):
                acc = acc + (z[i, dims[lo + a]] - means[lo + a]) * eigvecs[voff + a * m + b]
            y[i * m + b] = acc
            mt[b] += acc
    for b in range(m):
        mt[b] *= inv_n
    for i in range(n):
        for b in range(m):
            y[i * m + b] -= mt[b]

    for a in range(m):
        for b in range(a + 1):
            acc = 0.0
            for i in range(n):
                acc = acc + y[i * m + a] * y[i * m + b]
            s[a * m + b] = acc * inv_n
            s[b * m + a] = acc * inv_n

    smax = 0.0
    for a in range(m):
        if s[a * m + a] > smax:
            smax = s[a * m + a]

    # Cholesky s = L L^T, L lower
    for a in range(m * m):
        L[a] = 0.0
    for a in range(m):
        acc = s[a * m + a]
        for c in range(a):
            acc = acc - L[a * m + c] * L[a * m + c]
        if acc <= PIVOT_RTOL * smax or acc <= 0.0:
            return TARGET_DEGENERATE
        piv = sqrt(acc)
        L[a * m + a] = piv
        for b in range(a + 1, m):
            acc = s[b * m + a]
            for c in range(a):
                acc = acc - L[b * m + c] * L[a * m + c]
            L[b * m + a] = acc / piv

    # Li = L^-1 (lower triangular), si = Li^T Li = s^-1
    for a in range(m * m):
        Li[a] = 0.0
    for b in range(m):
        Li[b * m + b] = 1.0 / L[b * m + b]
        for a in range(b + 1, m):
            acc = 0.0
            for c in range(b, a):
                acc = acc - L[a * m + c] * Li[c * m + b]
            Li[a * m + b] = acc / L[a * m + a]
    for a in range(m):
        for b in range(a + 1):
            acc = 0.0
            for c in range(a, m):
                acc = acc + Li[c * m + a] * Li[c * m + b]
            si[a * m + b] = acc
            si[b * m + a] = acc

    logdet_t = 0.0
    logdet_s = 0.0
    for a in range(m):
        logdet_t += 2.0 * log(L[a * m + a])
        logdet_s += log(eigvals[lo + a])
    for a in range(m):
        acc = 0.0
        for b in range(m):
            acc = acc + si[a * m + b] * mt[b]
        w[a] = acc

    tr = 0.0
    quad = 0.0
    for a in range(m):
        tr += s[a * m + a] / eigvals[lo + a]
        quad += mt[a] * mt[a] / eigvals[lo + a]
    kl_ts_out[0] = 0.5 * (logdet_s - logdet_t - m + tr + quad)
    tr = 0.0
    quad = 0.0
    for a in range(m):
        tr += si[a * m + a] * eigvals[lo + a]
        quad += mt[a] * w[a]
    kl_st_out[0] = 0.5 * (logdet_t - logdet_s - m + tr + quad)

    if not want_grad:
        return OK

    # gs = coef/2 * (diag(1/lam) - si diag(lam) si - w w^T)
    for a in range(m):
        for b in range(m):
            acc = 0.0
            for c in range(m):
                acc = acc + si[a * m + c] * eigvals[lo + c] * si[c * m + b]
            gs[a * m + b] = -acc - w[a] * w[b]
        gs[a * m + a] += 1.0 / eigvals[lo + a]
    for a in range(m * m):
        gs[a] *= 0.5 * coef
    # gm (stored in w) = coef * (mt / lam + w)
    for a in range(m):
        w[a] = coef * (mt[a] / eigvals[lo + a] + w[a])

    for i in range(n):
        for b in range(m):
            acc = 0.0
            for c in range(m):
                acc = acc + y[i * m + c] * gs[c * m + b]
            gy[b] = w[b] * inv_n + 2.0 * inv_n * acc
        for a in range(m):
            acc = 0.0
            for b in range(m):
                acc = acc + gy[b] * eigvecs[voff + a * m + b]
            grad[i, dims[lo + a]] += acc
    return OK


def grouped_alignment(
    const double[:, ::1] z,
    const long long[::1] dims,
    const long long[::1] offsets,
    const double[::1] means,
    const double[::1] eigvecs,
    const long long[::1] vec_offsets,
    const double[::1] eigvals,
    bint want_grad=True,
):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t k = offsets.shape[0] - 1
    cdef Py_ssize_t g, m, mmax = 0
    cdef int status = OK
    cdef Py_ssize_t bad = -1
    cdef double coef = 1.0 / (2.0 * k)

    kl_ts_arr = np.zeros(k)
    kl_st_arr = np.zeros(k)
    grad_arr = np.zeros((z.shape[0], z.shape[1])) if want_grad else np.zeros((1, 1))
    cdef double[::1] kl_ts = kl_ts_arr
    cdef double[::1] kl_st = kl_st_arr
    cdef double[:, ::1] grad = grad_arr

    for g in range(k):
        m = offsets[g + 1] - offsets[g]
        if m > mmax:
            mmax = m

    cdef double* y = <double*> malloc(n * mmax * sizeof(double))
    cdef double* buf = <double*> malloc((5 * mmax * mmax + 3 * mmax + 1) * sizeof(double))
    if y == NULL or buf == NULL:
        free(y)
        free(buf)
        raise MemoryError()
    cdef double* s = buf
    cdef double* L = s + mmax * mmax
    cdef double* Li = L + mmax * mmax
    cdef double* si = Li + mmax * mmax
    cdef double* gs = si + mmax * mmax
    cdef double* mt = gs + mmax * mmax
    cdef double* w = mt + mmax
    cdef double* gy = w + mmax

    try:
        with nogil:
            for g in range(k):
                m = offsets[g + 1] - offsets[g]
                status = _group(
                    z, dims, means, eigvecs, eigvals,
                    offsets[g], m, vec_offsets[g], coef, want_grad,
                    y, mt, s, L, Li, si, w, gs, gy,
                    &kl_ts[g], &kl_st[g], grad,
                )
                if status != OK:
                    bad = g
                    break
    finally:
        free(y)
        free(buf)
    return status, bad, kl_ts_arr, kl_st_arr, (grad_arr if want_grad else None)

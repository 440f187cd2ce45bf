"""Independent reference computations for the test-suite.

Nothing here imports cafe's numerical code: each routine restates the math
in the most direct form available (explicit inverses and determinants,
brute-force enumeration, finite differences, Monte-Carlo sampling).
"""

import itertools

import numpy as np
import scipy.linalg as sla


def gaussian_kl(m0, s0, m1, s1):
    """KL(N(m0, s0) || N(m1, s1)) with explicit det and inverse."""
    m0, m1 = np.atleast_1d(m0).astype(float), np.atleast_1d(m1).astype(float)
    s0, s1 = np.atleast_2d(s0).astype(float), np.atleast_2d(s1).astype(float)
    d = m0.size
    s1_inv = np.linalg.inv(s1)
    diff = m1 - m0
    return 0.5 * (
        np.log(np.linalg.det(s1) / np.linalg.det(s0)) - d + np.trace(s1_inv @ s0) + diff @ s1_inv @ diff
    )


def monte_carlo_kl(m0, s0, m1, s1, n, rng):
    """E_{x~N0}[log N0(x) - log N1(x)] estimated from ``n`` samples."""
    m0, m1 = np.atleast_1d(m0).astype(float), np.atleast_1d(m1).astype(float)
    s0, s1 = np.atleast_2d(s0).astype(float), np.atleast_2d(s1).astype(float)
    x = rng.multivariate_normal(m0, s0, size=n)

    def logpdf(x, m, s):
        d = m.size
        diff = x - m
        sol = np.linalg.solve(s, diff.T).T
        return -0.5 * (np.sum(diff * sol, axis=1) + np.log(np.linalg.det(s)) + d * np.log(2 * np.pi))

    return float(np.mean(logpdf(x, m0, s0) - logpdf(x, m1, s1)))


def population_stats(z):
    z = np.asarray(z, dtype=float)
    return z.mean(axis=0), np.cov(z.T, bias=True).reshape(z.shape[1], z.shape[1])


def grouped_alignment_loss(z, src_mean, src_cov, groups, epsilon):
    """Straight-line grouped symmetric KL: batch stats, per-group eigenbasis,
    clipped spectrum, both KL directions, uniform average over groups."""
    mt, st = population_stats(z)
    total = 0.0
    for g in groups:
        g = list(g)
        lam, vecs = np.linalg.eigh(src_cov[np.ix_(g, g)])
        lam = np.maximum(lam, epsilon)
        m = vecs.T @ (mt[g] - src_mean[g])
        s = vecs.T @ st[np.ix_(g, g)] @ vecs
        zero = np.zeros(len(g))
        total += 0.5 * (gaussian_kl(m, s, zero, np.diag(lam)) + gaussian_kl(zero, np.diag(lam), m, s))
    return total / len(groups)


def normalized_cut(adj, part):
    """Shi-Malik normalized cut of a 2-way split (``part`` is a boolean mask)."""
    a = np.asarray(adj, dtype=float)
    cut = a[np.ix_(part, ~part)].sum()
    return cut / a[part].sum() + cut / a[~part].sum()


def best_bipartition(adj):
    """Exhaustive minimum normalized cut over all non-trivial 2-partitions."""
    d = adj.shape[0]
    best, best_val = None, np.inf
    for r in range(1, d):
        for members in itertools.combinations(range(1, d), r - 1):
            mask = np.zeros(d, dtype=bool)
            mask[[0, *members]] = True
            if mask.all():
                continue
            val = normalized_cut(adj, mask)
            if val < best_val - 1e-12:
                best, best_val = mask, val
    groups = [tuple(np.flatnonzero(best)), tuple(np.flatnonzero(~best))]
    return tuple(sorted(groups)), best_val


def frechet_sqrtm(m0, s0, m1, s1):
    """Fréchet distance using scipy's general (non-symmetric) matrix square root."""
    root = sla.sqrtm(np.asarray(s0) @ np.asarray(s1))
    diff = np.asarray(m0) - np.asarray(m1)
    return float(diff @ diff + np.trace(s0) + np.trace(s1) - 2.0 * np.real(np.trace(root)))


def central_difference(fn, x, h):
    """Gradient of scalar ``fn`` at array ``x`` (modified in place, restored)."""
    grad = np.empty_like(x, dtype=float)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = fn()
        x[idx] = orig - h
        down = fn()
        x[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(analytic, numeric, floor=1e-6):
    analytic, numeric = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = scale > floor
    if not mask.any():
        return float(np.max(np.abs(analytic - numeric), initial=0.0))
    return float(np.max(np.abs(analytic - numeric)[mask] / scale[mask]))


def random_spd(m, rng, cond=None):
    """Random SPD matrix; with ``cond`` its condition number equals ``cond``."""
    q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    if cond is None:
        lam = rng.uniform(0.5, 2.0, size=m)
    else:
        lam = np.exp(np.linspace(0.0, np.log(cond), m)) * rng.uniform(0.5, 2.0)
        rng.shuffle(lam)
    return (q * lam) @ q.T

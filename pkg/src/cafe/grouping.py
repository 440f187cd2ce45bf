"""Correlation graph over feature dimensions and its spectral partition."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInput, NumericalError
from .stats import FeatureStats


class DegenerateDimensionWarning(UserWarning):
    """A feature dimension has zero (or negative) variance."""


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint cover of ``range(dim)`` by ``k`` non-empty groups.

    Groups are kept in canonical form: members sorted ascending and groups
    ordered by their smallest member, so two partitions that differ only in
    labels compare equal through :meth:`canonical`.
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple(np.asarray(sorted(int(i) for i in g), dtype=np.int64) for g in self.groups)
        if not groups or any(g.size == 0 for g in groups):
            raise InvalidInput("every group must be non-empty")
        groups = tuple(sorted(groups, key=lambda g: int(g[0])))
        flat = np.concatenate(groups)
        if flat.min() < 0 or np.unique(flat).size != flat.size or flat.max() != flat.size - 1:
            raise InvalidInput("groups must be disjoint and cover 0..d-1")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_assignment(cls, assignment):
        assignment = np.asarray(assignment)
        labels = np.unique(assignment)
        return cls(tuple(np.flatnonzero(assignment == lab) for lab in labels))

    @classmethod
    def singletons(cls, dim):
        return cls(tuple(np.array([i]) for i in range(dim)))

    @property
    def k(self):
        return len(self.groups)

    @property
    def dim(self):
        return sum(g.size for g in self.groups)

    @property
    def sizes(self):
        return [int(g.size) for g in self.groups]

    @property
    def assignment(self):
        out = np.empty(self.dim, dtype=np.int64)
        for label, g in enumerate(self.groups):
            out[g] = label
        return out

    def canonical(self):
        return tuple(tuple(int(i) for i in g) for g in self.groups)

    def __eq__(self, other):
        if not isinstance(other, GroupPartition):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())


def correlation_adjacency(stats):
    """Absolute correlation matrix of ``stats.cov`` with entries in [0, 1].

    Dimensions with non-positive variance become isolated nodes (unit
    diagonal, zero elsewhere) and trigger a :class:`DegenerateDimensionWarning`.
    """
    cov = stats.cov if isinstance(stats, FeatureStats) else np.asarray(stats, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInput(f"covariance must be square, got {cov.shape}")
    var = np.diag(cov).copy()
    bad = var <= 0
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} feature dimension(s) have zero variance; treating them as isolated",
            DegenerateDimensionWarning,
            stacklevel=2,
        )
    scale = np.sqrt(np.where(bad, 1.0, var))
    adj = np.abs(cov / np.outer(scale, scale))
    adj[bad, :] = 0.0
    adj[:, bad] = 0.0
    np.clip(adj, 0.0, 1.0, out=adj)
    adj = 0.5 * (adj + adj.T)
    np.fill_diagonal(adj, 1.0)
    return adj


def max_group_size(partition):
    return max(partition.sizes)


def extract_group_stats(stats, partition):
    """Slice ``stats`` into per-group ``(mean, cov)`` pairs, one per group."""
    if partition.dim != stats.dim:
        raise InvalidInput(f"partition covers {partition.dim} dims but stats have {stats.dim}")
    return [(stats.mean[g], stats.cov[np.ix_(g, g)]) for g in partition.groups]


def spectral_embedding(adjacency, k):
    """Row-normalized eigenvectors of the ``k`` smallest eigenvalues of the
    symmetric normalized Laplacian ``I - D^-1/2 A D^-1/2``."""
    adj = np.asarray(adjacency, dtype=np.float64)
    degree = adj.sum(axis=1)
    inv_sqrt = np.where(degree > 0, 1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 0.0)
    lap = np.eye(adj.shape[0]) - inv_sqrt[:, None] * adj * inv_sqrt[None, :]
    lap = 0.5 * (lap + lap.T)
    try:
        _, vecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Laplacian eigendecomposition failed: {exc}") from exc
    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[c] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _sq_distances(points, centers):
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _repair_empty(points, labels, centers, k):
    # Move the point farthest from its own centroid into each empty cluster.
    for _ in range(k):
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return labels
        dist = np.sum((points - centers[labels]) ** 2, axis=1)
        dist[counts[labels] <= 1] = -1.0
        idx = int(np.argmax(dist))
        labels[idx] = empty[0]
        centers[empty[0]] = points[idx]
    return labels


def kmeans(points, k, seed, n_init=10, max_iter=300, tol=1e-10):
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` runs.

    Returns ``(labels, inertia)``. Every cluster is non-empty when
    ``len(points) >= k``.
    """
    points = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(n_init):
        centers = _kmeans_pp(points, k, rng)
        labels = np.argmin(_sq_distances(points, centers), axis=1)
        for _ in range(max_iter):
            labels = _repair_empty(points, labels, centers, k)
            new_centers = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
            shift = np.sum((new_centers - centers) ** 2)
            centers = new_centers
            new_labels = np.argmin(_sq_distances(points, centers), axis=1)
            if np.array_equal(new_labels, labels) and shift <= tol:
                break
            labels = new_labels
        labels = _repair_empty(points, labels, centers, k)
        inertia = float(np.sum((points - centers[labels]) ** 2))
        if inertia < best_inertia - 1e-12:
            best_labels, best_inertia = labels.copy(), inertia
    return best_labels, best_inertia


def _respect_components(adj, labels, k):
    """Split clusters that straddle connected components of ``adj``, then merge
    the most strongly linked same-component clusters until ``k`` remain."""
    n_comp, comp = connected_components(adj > 0, directed=False)
    if n_comp == 1 or n_comp > k:
        return labels
    clusters = {}
    for i, key in enumerate(zip(labels.tolist(), comp.tolist())):
        clusters.setdefault(key, []).append(i)
    groups = [np.array(v) for _, v in sorted(clusters.items(), key=lambda kv: kv[1][0])]
    while len(groups) > k:
        best, pair = -1.0, None
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                if comp[groups[a][0]] != comp[groups[b][0]]:
                    continue
                link = adj[np.ix_(groups[a], groups[b])].mean()
                if link > best:
                    best, pair = link, (a, b)
        a, b = pair
        groups[a] = np.sort(np.concatenate([groups[a], groups[b]]))
        del groups[b]
    out = np.empty_like(labels)
    for label, g in enumerate(groups):
        out[g] = label
    return out


def spectral_cluster(adjacency, k, seed=0):
    """Split the nodes of ``adjacency`` into ``k`` groups.

    ``k == d`` short-circuits to singleton groups (the dimension-wise case),
    ``k == 1`` to a single group. When the graph has at most ``k`` connected
    components, no group spans two of them.
    """
    adj = np.asarray(adjacency, dtype=np.float64)
    d = adj.shape[0]
    if adj.ndim != 2 or adj.shape[1] != d:
        raise InvalidInput(f"adjacency must be square, got {adj.shape}")
    if not 1 <= k <= d:
        raise InvalidInput(f"k must be in [1, {d}], got {k}")
    if k == d:
        return GroupPartition.singletons(d)
    if k == 1:
        return GroupPartition((np.arange(d),))
    emb = spectral_embedding(adj, k)
    labels, _ = kmeans(emb, k, seed)
    labels = _respect_components(adj, labels, k)
    return GroupPartition.from_assignment(labels)

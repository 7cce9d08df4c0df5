"""Discrete community extraction from a relaxed membership matrix.

Spectral embedding onto the leading eigenvectors followed by Lloyd's
algorithm with kmeans++ seeding and restarts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

SIGN_EPS = 1e-9


@dataclass(frozen=True)
class CommunityLabels:
    """1-based community ids with every community nonempty."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1:
            raise ValidationError("labels must be a vector")
        if labels.min() < 1 or labels.max() > self.k:
            raise ValidationError(f"labels must lie in [1, {self.k}]")
        if len(np.unique(labels)) != self.k:
            raise ValidationError("every community must be nonempty")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


def spectral_embedding(q, k: int) -> np.ndarray:
    """Orthonormal eigenvectors of Q for the k largest eigenvalues.

    Columns are ordered by decreasing eigenvalue and sign-fixed so the
    first entry of significant magnitude is positive.
    """
    qm = np.asarray(getattr(q, "values", q), dtype=float)
    p = qm.shape[0]
    if not 1 <= k <= p:
        raise ValidationError(f"need 1 <= k <= p, got k={k}, p={p}")
    try:
        evals, evecs = np.linalg.eigh((qm + qm.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    cols = evecs[:, ::-1][:, :k].copy()
    for idx in range(k):
        col = cols[:, idx]
        ref = np.abs(col).max()
        nz = np.nonzero(np.abs(col) > SIGN_EPS * max(ref, 1.0))[0]
        if nz.size and col[nz[0]] < 0:
            cols[:, idx] = -col
    return cols


def _kmeans_pp_seed(points: np.ndarray, k: int, rng) -> np.ndarray:
    p = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(p))
    centroids[0] = points[first]
    dist2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for idx in range(1, k):
        total = dist2.sum()
        if total <= 0:
            choice = int(rng.integers(p))
        else:
            choice = int(rng.choice(p, p=dist2 / total))
        centroids[idx] = points[choice]
        dist2 = np.minimum(dist2, np.sum((points - centroids[idx]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter=100):
    p, k = points.shape[0], centroids.shape[0]
    assign = np.full(p, -1)
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dists, axis=1)
        for c in range(k):
            if not np.any(new_assign == c):
                # re-seed an empty cluster from the farthest point
                far = int(np.argmax(dists[np.arange(p), new_assign]))
                centroids[c] = points[far]
                new_assign[far] = c
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = assign == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
    dists = np.sum((points - centroids[assign]) ** 2, axis=1)
    return assign, float(dists.sum())


def kmeans_partition(v: np.ndarray, k: int, restarts: int = 20,
                     seed: int = 0) -> CommunityLabels:
    """Best-of-restarts Lloyd with kmeans++ seeding.

    Restarts draw from one seeded generator in order; ties in the
    within-cluster sum of squares keep the earliest restart.
    """
    points = np.asarray(v, dtype=float)
    if restarts < 1:
        raise ValidationError("restarts must be at least 1")
    if not 1 <= k <= points.shape[0]:
        raise ValidationError(f"need 1 <= k <= p, got k={k}")
    rng = np.random.default_rng(seed)
    best_assign = None
    best_wcss = np.inf
    for _ in range(restarts):
        centroids = _kmeans_pp_seed(points, k, rng)
        assign, wcss = _lloyd(points, centroids.copy())
        if wcss < best_wcss:
            best_wcss = wcss
            best_assign = assign
    # relabel to 1..k in order of first appearance for determinism
    labels = np.zeros_like(best_assign)
    next_id = 0
    seen: dict[int, int] = {}
    for i, a in enumerate(best_assign):
        if a not in seen:
            next_id += 1
            seen[a] = next_id
        labels[i] = seen[a]
    return CommunityLabels(labels, k)


def select_k(q, h: int, k_max: int = 10) -> int:
    """Largest-eigengap choice of the community count.

    Scans k in [2, min(p - H + 1, k_max)]; falls back to 1 when the
    range is empty.
    """
    qm = np.asarray(getattr(q, "values", q), dtype=float)
    p = qm.shape[0]
    upper = min(p - h + 1, k_max, p - 1)
    if upper < 2:
        return 1
    evals = np.linalg.eigvalsh((qm + qm.T) / 2.0)[::-1]
    candidates = np.arange(2, upper + 1)
    gaps = evals[candidates - 1] - evals[candidates]
    return int(candidates[int(np.argmax(gaps))])


def extract_communities(q, h: int, k: int | None = None,
                        restarts: int = 20, seed: int = 0,
                        row_normalize: bool = True) -> CommunityLabels:
    """Spectral embedding + kmeans; picks k by eigengap when not given.

    Rows of the embedding are scaled to unit length before clustering
    (the usual spectral-clustering normalization); identical rows stay
    identical, so exact block structure is preserved.
    """
    if k is None:
        k = select_k(q, h)
    v = spectral_embedding(q, k)
    if row_normalize:
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        v = v / np.maximum(norms, 1e-12)
    return kmeans_partition(v, k, restarts=restarts, seed=seed)

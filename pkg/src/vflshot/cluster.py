"""K-means over partial gradients, used by clients to derive temporary labels."""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import kernels


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations_run: int
    inertia_history: List[float] = field(default_factory=list)


def _plusplus_init(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centroids[j] = points[idx]
        closest = np.minimum(closest, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _repair_empty(points, labels, dists, k):
    """Move the worst-fit point into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    dists = dists.copy()
    for j in np.flatnonzero(counts == 0):
        donors = counts[labels] > 1
        if not donors.any():
            break
        cand = np.where(donors, dists, -1.0)
        i = int(np.argmax(cand))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] += 1
        dists[i] = 0.0
    return labels


def _lloyd(points, k, max_iter, tol, rng):
    centroids = _plusplus_init(points, k, rng)
    history = []
    it = 0
    labels, dists = kernels.assign_nearest(points, centroids)
    for it in range(1, max_iter + 1):
        labels = _repair_empty(points, labels, dists, k)
        new = np.array([points[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        labels, dists = kernels.assign_nearest(points, centroids)
        history.append(float(dists.sum()))
        if shift < tol:
            break
    labels = _repair_empty(points, labels, dists, k)
    centroids = np.array([points[labels == j].mean(axis=0) for j in range(k)])
    inertia = float(np.sum((points - centroids[labels]) ** 2))
    return KMeansResult(centroids, labels, inertia, it, history)


def kmeans(points, k, max_iter=300, tol=1e-6, seed=0, restarts=10) -> KMeansResult:
    """k-means++ seeded Lloyd iterations, best of ``restarts`` by inertia.

    Ties between restarts keep the earliest; ties in nearest-centroid
    assignment go to the lowest cluster index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array")
    if k < 1 or points.shape[0] < k:
        raise ValueError(f"need at least k={k} points, got {points.shape[0]}")
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite values in points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        res = _lloyd(points, k, max_iter, tol, rng)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def normalize_rows(x, eps=1e-12):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, eps)


def gradients_to_templabels(grads, num_classes, seed=0, normalize=True, restarts=10):
    """Cluster per-sample partial gradients into ``num_classes`` groups.

    The returned labels are cluster ids, not server class ids; only the
    grouping carries information.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if num_classes > grads.shape[0]:
        raise ValueError(f"cannot form {num_classes} clusters from {grads.shape[0]} gradients")
    if num_classes == 1:
        return np.zeros(grads.shape[0], dtype=np.intp)
    pts = normalize_rows(grads) if normalize else grads
    return kmeans(pts, num_classes, seed=seed, restarts=restarts).assignments


def purity(assignments, truth):
    """Fraction of samples whose cluster's majority class equals their class."""
    assignments = np.asarray(assignments)
    truth = np.asarray(truth)
    hits = 0
    for c in np.unique(assignments):
        members = truth[assignments == c]
        hits += np.bincount(members).max()
    return hits / truth.size

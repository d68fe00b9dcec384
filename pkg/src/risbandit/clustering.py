"""Device clustering for the many-devices mode.

When there are more devices than surfaces, devices are grouped by ground
position into one cluster per surface-count and take turns inside each
cluster: exactly one device per cluster runs the full learner each slot,
the rest transmit directly.
"""
import numpy as np

from .bandit import rand_index


def kmeans_pp_seed(points, k, rng):
    """k-means++ seeding: first center uniform, then distance-squared weighted.

    Weighted picks invert one uniform against the cumulative distance mass.
    """
    pts = np.asarray(points, dtype=float)
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rand_index(rng, len(pts))]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            centers[j] = pts[rand_index(rng, len(pts))]
        else:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            centers[j] = pts[min(idx, len(pts) - 1)]
        d2 = np.minimum(d2, np.sum((pts - centers[j]) ** 2, axis=1))
    return centers


def kmeans_xy(points, k, rng, iter_cap=100, tol=1e-6):
    """Lloyd's algorithm on 2-D ground coordinates.

    Ties go to the lowest center index; a cluster that empties keeps its
    previous center. Stops when no center moves more than tol meters or
    after iter_cap rounds.
    """
    pts = np.asarray(points, dtype=float)[:, :2]
    if k >= len(pts):
        return np.arange(len(pts)) % k, pts.copy()
    centers = kmeans_pp_seed(pts, k, rng)
    labels = np.zeros(len(pts), dtype=np.int64)
    for _ in range(iter_cap):
        d2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        moved = 0.0
        for j in range(k):
            members = pts[labels == j]
            if len(members) == 0:
                continue
            new = members.mean(axis=0)
            moved = max(moved, float(np.linalg.norm(new - centers[j])))
            centers[j] = new
        if moved <= tol:
            break
    return labels, centers


def cluster_ranks(labels):
    """Round-robin bookkeeping: (rank within own cluster, cluster size) per device."""
    labels = np.asarray(labels)
    ranks = np.zeros(len(labels), dtype=np.int64)
    sizes = np.zeros(len(labels), dtype=np.int64)
    for j in np.unique(labels):
        members = np.flatnonzero(labels == j)
        ranks[members] = np.arange(len(members))
        sizes[members] = len(members)
    return ranks, sizes


def cluster_round_robin(labels, t):
    """Flags of the devices whose turn it is at slot t (one per cluster)."""
    ranks, sizes = cluster_ranks(labels)
    return (t % sizes) == ranks

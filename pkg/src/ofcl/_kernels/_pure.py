"""Pure numpy implementations of the hot kernels.

Call-compatible with the compiled module ``_core``; for identical inputs the
two backends agree up to floating-point rounding (the distance matrix here is
computed via the expanded quadratic form so memory stays O(n*m)).
"""

import numpy as np

NO_INDEX = -1


def pairwise_dist(x, y):
    """Dense Euclidean distance matrix of shape (len(x), len(y))."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def dbscan_labels(x, eps, min_pts):
    """Density-based cluster labels; -1 marks noise.

    A point is core when its eps-neighborhood (itself included) holds at
    least ``min_pts`` points. Seeds are scanned in index order, expansion is
    FIFO with neighbors appended in index order, so border points keep the
    label of the first cluster that reaches them.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    d = pairwise_dist(x, x)
    neighbors = [np.flatnonzero(d[i] <= eps) for i in range(n)]
    core = np.array([nb.size >= min_pts for nb in neighbors])
    cluster = 0
    for seed in range(n):
        if labels[seed] != -1 or not core[seed]:
            continue
        labels[seed] = cluster
        queue = [seed]
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            for k in neighbors[j]:
                if labels[k] == -1:
                    labels[k] = cluster
                    if core[k]:
                        queue.append(int(k))
        cluster += 1
    return labels


def detect_batch(x, centroids, radii):
    """Nearest-sphere statistics for a batch of query points.

    Spheres must be passed in the caller's tie-break order (ascending label);
    ties on distance then resolve to the earlier sphere. Returns four arrays:

    - chosen: index of the containing sphere with the nearest centroid,
      or -1 when the point lies inside no sphere
    - nearest: index of the globally nearest centroid
    - nearest_dist: distance to that centroid
    - openness: min over spheres of (distance - radius)
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    radii = np.ascontiguousarray(radii, dtype=np.float64)
    d = pairwise_dist(x, centroids)
    nearest = np.argmin(d, axis=1)
    nearest_dist = d[np.arange(d.shape[0]), nearest]
    slack = d - radii[None, :]
    openness = slack.min(axis=1)
    inside = d <= radii[None, :]
    d_masked = np.where(inside, d, np.inf)
    chosen = np.argmin(d_masked, axis=1)
    chosen = np.where(inside.any(axis=1), chosen, NO_INDEX)
    return (
        chosen.astype(np.int64),
        nearest.astype(np.int64),
        nearest_dist.astype(np.float64),
        openness.astype(np.float64),
    )

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see _pure.py for reference
semantics). Plain C loops over contiguous float64 memoryviews."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

NO_INDEX = -1


def pairwise_dist(x, y):
    """Dense Euclidean distance matrix of shape (len(x), len(y))."""
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = yv.shape[0], dim = xv.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(dim):
                diff = xv[i, k] - yv[j, k]
                acc += diff * diff
            ov[i, j] = sqrt(acc)
    return out


def dbscan_labels(x, double eps, long min_pts):
    """Density-based cluster labels; -1 marks noise. Same scan-order contract
    as the pure backend: index-order seeds, FIFO expansion."""
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], dim = xv.shape[1]
    labels = np.full(n, -1, dtype=np.int64)
    cdef long[::1] lab = labels
    if n == 0:
        return labels
    cdef double[:, ::1] d = pairwise_dist(x, x)

    # flattened neighbor lists: nbr[start[i]:start[i+1]] are i's neighbors
    counts = np.empty(n, dtype=np.int64)
    cdef long[::1] cnt = counts
    cdef Py_ssize_t i, j
    for i in range(n):
        cnt[i] = 0
        for j in range(n):
            if d[i, j] <= eps:
                cnt[i] += 1
    starts = np.zeros(n + 1, dtype=np.int64)
    cdef long[::1] start = starts
    for i in range(n):
        start[i + 1] = start[i] + cnt[i]
    nbrs = np.empty(start[n], dtype=np.int64)
    cdef long[::1] nbr = nbrs
    cdef Py_ssize_t pos
    for i in range(n):
        pos = start[i]
        for j in range(n):
            if d[i, j] <= eps:
                nbr[pos] = j
                pos += 1

    queue = np.empty(start[n], dtype=np.int64)
    cdef long[::1] q = queue
    cdef Py_ssize_t qi, qn, seed, k, node
    cdef long cluster = 0
    for seed in range(n):
        if lab[seed] != -1 or cnt[seed] < min_pts:
            continue
        lab[seed] = cluster
        q[0] = seed
        qi = 0
        qn = 1
        while qi < qn:
            node = q[qi]
            qi += 1
            for k in range(start[node], start[node + 1]):
                j = nbr[k]
                if lab[j] == -1:
                    lab[j] = cluster
                    if cnt[j] >= min_pts:
                        q[qn] = j
                        qn += 1
        cluster += 1
    return labels


def detect_batch(x, centroids, radii):
    """Nearest-sphere statistics for a batch; see _pure.detect_batch."""
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(radii, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], s = cv.shape[0], dim = xv.shape[1]
    chosen = np.empty(n, dtype=np.int64)
    nearest = np.empty(n, dtype=np.int64)
    nearest_dist = np.empty(n, dtype=np.float64)
    openness = np.empty(n, dtype=np.float64)
    cdef long[::1] chv = chosen
    cdef long[::1] nev = nearest
    cdef double[::1] ndv = nearest_dist
    cdef double[::1] opv = openness
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, dist, slack, best_d, chosen_d, open_s
    cdef long best_i, chosen_i
    for i in range(n):
        best_d = INFINITY
        chosen_d = INFINITY
        open_s = INFINITY
        best_i = 0
        chosen_i = NO_INDEX
        for j in range(s):
            acc = 0.0
            for k in range(dim):
                diff = xv[i, k] - cv[j, k]
                acc += diff * diff
            dist = sqrt(acc)
            if dist < best_d:
                best_d = dist
                best_i = j
            slack = dist - rv[j]
            if slack < open_s:
                open_s = slack
            if dist <= rv[j] and dist < chosen_d:
                chosen_d = dist
                chosen_i = j
        chv[i] = chosen_i
        nev[i] = best_i
        ndv[i] = best_d
        opv[i] = open_s
    return chosen, nearest, nearest_dist, openness

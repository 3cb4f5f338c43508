"""Compiled assignment and centroid-update passes for Lloyd iterations."""

import numpy as np
from numba import njit


@njit(cache=True)
def assign(X, centroids, labels, costs):
    """Move each point to its nearest centroid when strictly closer than
    its current one; refreshes ``costs`` and returns the number of moves.

    Distances are summed coordinate by coordinate in a fixed order, so the
    same point and centroid always give the same value.
    """
    n, d = X.shape
    k = centroids.shape[0]
    moves = 0
    for i in range(n):
        cur = labels[i]
        best = cur
        best_d = 0.0
        for j in range(d):
            t = X[i, j] - centroids[cur, j]
            best_d += t * t
        for c in range(k):
            if c == cur:
                continue
            s = 0.0
            for j in range(d):
                t = X[i, j] - centroids[c, j]
                s += t * t
                if s >= best_d:
                    break
            if s < best_d:
                best_d = s
                best = c
        if best != cur:
            labels[i] = best
            moves += 1
        costs[i] = best_d
    return moves


@njit(cache=True)
def point_costs(X, centroids, labels, costs):
    n, d = X.shape
    total = 0.0
    for i in range(n):
        s = 0.0
        c = labels[i]
        for j in range(d):
            t = X[i, j] - centroids[c, j]
            s += t * t
        costs[i] = s
        total += s
    return total


@njit(cache=True)
def cluster_sums(X, labels, k):
    n, d = X.shape
    sums = np.zeros((k, d))
    counts = np.zeros(k)
    for i in range(n):
        c = labels[i]
        counts[c] += 1.0
        for j in range(d):
            sums[c, j] += X[i, j]
    return sums, counts

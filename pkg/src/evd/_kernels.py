"""Compiled inner loops for the geometry and labeling hot paths.

These kernels exist purely for speed; their semantics are pinned by the
pure-numpy oracles in the test suite. Distances are squared Euclidean over
the first three point columns, accumulated as dx*dx + dy*dy + dz*dz in that
order so results match the naive numpy evaluation bit for bit, and every
selection breaks distance ties by ascending index.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def fps_select(coords, start, count):
    """Farthest-first traversal over ``coords`` (m, 3) from ``start``.

    Returns ``count`` indices into coords; ties on the max-min distance go to
    the lowest index (first maximum wins).
    """
    m = coords.shape[0]
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start
    min_d2 = np.empty(m, dtype=np.float64)
    for i in range(m):
        dx = coords[i, 0] - coords[start, 0]
        dy = coords[i, 1] - coords[start, 1]
        dz = coords[i, 2] - coords[start, 2]
        min_d2[i] = dx * dx + dy * dy + dz * dz
    min_d2[start] = -1.0
    for pick in range(1, count):
        best = -1.0
        arg = 0
        for i in range(m):
            if min_d2[i] > best:
                best = min_d2[i]
                arg = i
        chosen[pick] = arg
        min_d2[arg] = -1.0
        for i in range(m):
            if min_d2[i] < 0.0:
                continue
            dx = coords[i, 0] - coords[arg, 0]
            dy = coords[i, 1] - coords[arg, 1]
            dz = coords[i, 2] - coords[arg, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < min_d2[i]:
                min_d2[i] = d2
    return chosen


@njit(cache=True)
def knn_select(targets, sources, k):
    """Per target: indices and squared distances of the k nearest sources,
    ordered by (distance, index). Returns (idx (n,k), d2 (n,k))."""
    n = targets.shape[0]
    s = sources.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k), dtype=np.float64)
    for t in range(n):
        filled = 0
        for j in range(s):
            dx = targets[t, 0] - sources[j, 0]
            dy = targets[t, 1] - sources[j, 1]
            dz = targets[t, 2] - sources[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if filled < k:
                pos = filled
                while pos > 0 and (
                    dist[t, pos - 1] > d2
                    or (dist[t, pos - 1] == d2 and idx[t, pos - 1] > j)
                ):
                    dist[t, pos] = dist[t, pos - 1]
                    idx[t, pos] = idx[t, pos - 1]
                    pos -= 1
                dist[t, pos] = d2
                idx[t, pos] = j
                filled += 1
            elif d2 < dist[t, k - 1] or (d2 == dist[t, k - 1] and j < idx[t, k - 1]):
                pos = k - 1
                while pos > 0 and (
                    dist[t, pos - 1] > d2
                    or (dist[t, pos - 1] == d2 and idx[t, pos - 1] > j)
                ):
                    dist[t, pos] = dist[t, pos - 1]
                    idx[t, pos] = idx[t, pos - 1]
                    pos -= 1
                dist[t, pos] = d2
                idx[t, pos] = j
    return idx, dist


@njit(cache=True)
def ball_select(points, centroid_idx, r2, k):
    """Per centroid: the k nearest points with squared distance <= r2,
    ordered by (distance, index); unfilled slots repeat the centroid index."""
    t_n = centroid_idx.shape[0]
    n = points.shape[0]
    grid = np.empty((t_n, k), dtype=np.int64)
    dist = np.empty(k, dtype=np.float64)
    best = np.empty(k, dtype=np.int64)
    for t in range(t_n):
        c = centroid_idx[t]
        cx = points[c, 0]
        cy = points[c, 1]
        cz = points[c, 2]
        filled = 0
        for j in range(n):
            dx = points[j, 0] - cx
            dy = points[j, 1] - cy
            dz = points[j, 2] - cz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 > r2:
                continue
            if filled < k:
                pos = filled
                while pos > 0 and (
                    dist[pos - 1] > d2 or (dist[pos - 1] == d2 and best[pos - 1] > j)
                ):
                    dist[pos] = dist[pos - 1]
                    best[pos] = best[pos - 1]
                    pos -= 1
                dist[pos] = d2
                best[pos] = j
                filled += 1
            elif d2 < dist[k - 1] or (d2 == dist[k - 1] and j < best[k - 1]):
                pos = k - 1
                while pos > 0 and (
                    dist[pos - 1] > d2 or (dist[pos - 1] == d2 and best[pos - 1] > j)
                ):
                    dist[pos] = dist[pos - 1]
                    best[pos] = best[pos - 1]
                    pos -= 1
                dist[pos] = d2
                best[pos] = j
        for slot in range(k):
            grid[t, slot] = best[slot] if slot < filled else c
    return grid


@njit(cache=True)
def union_find_components(node_y, node_x, node_of, occ):
    """Component root per occupied pixel under 4-connectivity.

    ``node_y``/``node_x`` list occupied pixels in raster order; ``node_of``
    maps pixel -> node index (-1 for background)."""
    n = node_y.shape[0]
    parent = np.arange(n)
    for i in range(n):
        y = node_y[i]
        x = node_x[i]
        for direction in range(2):
            if direction == 0:
                ny, nx = y, x - 1
            else:
                ny, nx = y - 1, x
            if ny < 0 or nx < 0 or not occ[ny, nx]:
                continue
            j = node_of[ny, nx]
            a = i
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            b = j
            while parent[b] != b:
                parent[b] = parent[parent[b]]
                b = parent[b]
            if a != b:
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    roots = np.empty(n, dtype=np.int64)
    for i in range(n):
        a = i
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        roots[i] = a
    return roots

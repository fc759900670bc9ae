"""Pure numpy / heapq versions of the compiled kernels."""

import heapq

import numpy as np

# max float64 elements in one broadcast block
_BLOCK = 1 << 22


def _row_chunks(na, nb, k):
    step = max(1, _BLOCK // max(1, nb * k))
    for start in range(0, na, step):
        yield slice(start, min(na, start + step))


def pairwise_dist(a, b):
    if a.shape[1] != b.shape[1]:
        raise ValueError("column mismatch")
    out = np.empty((a.shape[0], b.shape[0]))
    for sl in _row_chunks(a.shape[0], b.shape[0], a.shape[1]):
        diff = a[sl, None, :] - b[None, :, :]
        out[sl] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def nearest_rows(a, b):
    if a.shape[1] != b.shape[1]:
        raise ValueError("column mismatch")
    if b.shape[0] == 0:
        raise ValueError("empty target")
    out = np.empty(a.shape[0], dtype=np.int64)
    for sl in _row_chunks(a.shape[0], b.shape[0], a.shape[1]):
        diff = a[sl, None, :] - b[None, :, :]
        # argmin returns the first minimum, i.e. the lowest index on ties
        out[sl] = np.argmin(np.einsum("ijk,ijk->ij", diff, diff), axis=1)
    return out


def dijkstra(indptr, indices, weights, sources):
    n = len(indptr) - 1
    indptr = indptr.tolist()
    indices = indices.tolist()
    weights = weights.tolist()
    out = np.full((len(sources), n), np.inf)
    for s, src in enumerate(sources.tolist()):
        if src < 0 or src >= n:
            raise IndexError("source out of range")
        dist = [float("inf")] * n
        dist[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            du, u = heapq.heappop(heap)
            if du > dist[u]:
                continue
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                nd = du + weights[e]
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        out[s] = dist
    return out

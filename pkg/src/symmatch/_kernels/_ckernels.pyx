# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: dense row distances, exact nearest rows, multi-source Dijkstra."""

import numpy as np

from libc.math cimport sqrt, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free


def pairwise_dist(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], k = a.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double s, d
    if b.shape[1] != k:
        raise ValueError("column mismatch")
    out = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(na):
            for j in range(nb):
                s = 0.0
                for t in range(k):
                    d = a[i, t] - b[j, t]
                    s = s + d * d
                o[i, j] = sqrt(s)
    return out


def nearest_rows(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], k = a.shape[1]
    cdef Py_ssize_t i, j, t, best_j
    cdef double s, d, best
    if b.shape[1] != k:
        raise ValueError("column mismatch")
    if nb == 0:
        raise ValueError("empty target")
    out = np.empty(na, dtype=np.int64)
    cdef int64_t[::1] o = out
    with nogil:
        for i in range(na):
            best = INFINITY
            best_j = 0
            for j in range(nb):
                s = 0.0
                for t in range(k):
                    d = a[i, t] - b[j, t]
                    s = s + d * d
                # strict: ties keep the lowest index
                if s < best:
                    best = s
                    best_j = j
            o[i] = best_j
    return out


cdef inline void _heap_push(double* hd, int64_t* hn, Py_ssize_t* size,
                            double d, int64_t v) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t p
    size[0] += 1
    while i > 0:
        p = (i - 1) >> 1
        if hd[p] < d or (hd[p] == d and hn[p] <= v):
            break
        hd[i] = hd[p]
        hn[i] = hn[p]
        i = p
    hd[i] = d
    hn[i] = v


cdef inline void _heap_pop(double* hd, int64_t* hn, Py_ssize_t* size) noexcept nogil:
    cdef Py_ssize_t n = size[0] - 1
    cdef double d = hd[n]
    cdef int64_t v = hn[n]
    cdef Py_ssize_t i = 0, c
    size[0] = n
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and (hd[c + 1] < hd[c] or (hd[c + 1] == hd[c] and hn[c + 1] < hn[c])):
            c += 1
        if d < hd[c] or (d == hd[c] and v <= hn[c]):
            break
        hd[i] = hd[c]
        hn[i] = hn[c]
        i = c
    hd[i] = d
    hn[i] = v


def dijkstra(const int64_t[::1] indptr, const int64_t[::1] indices,
             const double[::1] weights, const int64_t[::1] sources):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t ns = sources.shape[0]
    cdef Py_ssize_t nnz = indices.shape[0]
    cdef Py_ssize_t cap = nnz + 1
    cdef Py_ssize_t s, size, e
    cdef int64_t u, v, src
    cdef double du, nd
    out = np.full((ns, n), np.inf, dtype=np.float64)
    cdef double[:, ::1] o = out
    for s in range(ns):
        if sources[s] < 0 or sources[s] >= n:
            raise IndexError("source out of range")
    cdef double* hd = <double*> malloc(cap * sizeof(double))
    cdef int64_t* hn = <int64_t*> malloc(cap * sizeof(int64_t))
    if hd == NULL or hn == NULL:
        free(hd)
        free(hn)
        raise MemoryError()
    try:
        with nogil:
            for s in range(ns):
                src = sources[s]
                size = 0
                o[s, src] = 0.0
                _heap_push(hd, hn, &size, 0.0, src)
                while size > 0:
                    du = hd[0]
                    u = hn[0]
                    _heap_pop(hd, hn, &size)
                    if du > o[s, u]:
                        continue
                    for e in range(indptr[u], indptr[u + 1]):
                        v = indices[e]
                        nd = du + weights[e]
                        if nd < o[s, v]:
                            o[s, v] = nd
                            _heap_push(hd, hn, &size, nd, v)
    finally:
        free(hd)
        free(hn)
    return out

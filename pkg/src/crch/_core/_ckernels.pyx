# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see _pykernels.py for the reference semantics."""
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np


cdef inline bint _less(double d1, long long k1, double d2, long long k2) noexcept nogil:
    return d1 < d2 or (d1 == d2 and k1 < k2)


def best_triplet_pair(double[:, ::1] D, unsigned char[::1] active, long long[::1] keys,
                      int R, double margin):
    cdef Py_ssize_t n = D.shape[0]
    cdef Py_ssize_t i, j, q, r, pos, m = 0
    for i in range(n):
        if active[i]:
            m += 1
    if m < 2:
        raise ValueError("need at least two active clusters")
    cdef int r_cnt = R if R < m - 1 else <int>(m - 1)
    cdef int denom = r_cnt if r_cnt > 2 else 2
    cdef double coef = margin / (denom - 1)
    cdef Py_ssize_t *nb = <Py_ssize_t *> malloc(r_cnt * sizeof(Py_ssize_t))
    cdef double *nd = <double *> malloc(r_cnt * sizeof(double))
    if nb == NULL or nd == NULL:
        free(nb)
        free(nd)
        raise MemoryError()

    cdef double best = INFINITY, min_dist = INFINITY
    cdef Py_ssize_t bi = -1, bj = -1
    cdef long long bki = 0, bkj = 0
    cdef int filled
    cdef double dij, acc, score, d
    try:
        with nogil:
            for i in range(n):
                if not active[i]:
                    continue
                filled = 0
                for j in range(n):
                    if j == i or not active[j]:
                        continue
                    d = D[i, j]
                    if d < min_dist:
                        min_dist = d
                    if filled < r_cnt:
                        pos = filled
                        filled += 1
                    elif _less(d, keys[j], nd[r_cnt - 1], keys[nb[r_cnt - 1]]):
                        pos = r_cnt - 1
                    else:
                        continue
                    while pos > 0 and _less(d, keys[j], nd[pos - 1], keys[nb[pos - 1]]):
                        nd[pos] = nd[pos - 1]
                        nb[pos] = nb[pos - 1]
                        pos -= 1
                    nd[pos] = d
                    nb[pos] = j
                for r in range(r_cnt):
                    dij = nd[r]
                    acc = 0.0
                    for q in range(r_cnt):
                        acc = acc + (dij - nd[q])
                    score = dij + coef * acc
                    if (bi < 0 or score < best or
                            (score == best and (keys[i] < bki or
                                                (keys[i] == bki and keys[nb[r]] < bkj)))):
                        best = score
                        bi = i
                        bj = nb[r]
                        bki = keys[i]
                        bkj = keys[nb[r]]
    finally:
        free(nb)
        free(nd)
    return int(bi), int(bj), float(best), float(min_dist)


def merge_rows(double[:, ::1] D, unsigned char[::1] active, double[::1] sizes,
               Py_ssize_t a, Py_ssize_t b):
    cdef Py_ssize_t n = D.shape[0], k
    cdef double sa = sizes[a], sb = sizes[b], v
    with nogil:
        for k in range(n):
            if k == a or k == b or not active[k]:
                continue
            v = (sa * D[a, k] + sb * D[b, k]) / (sa + sb)
            D[a, k] = v
            D[k, a] = v
        active[b] = 0
        sizes[a] = sa + sb


def earliest_start(list starts, list ends, double ready, double duration):
    cdef double t = ready, s, e
    cdef Py_ssize_t i, n = len(starts)
    for i in range(n):
        s = <double> starts[i]
        e = <double> ends[i]
        if e <= t:
            continue
        if t + duration <= s:
            return t
        if e > t:
            t = e
    return t


def mean_cross_distance(A, B):
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t i, j, k, na = a.shape[0], nbb = b.shape[0], dim = a.shape[1]
    cdef double total = 0.0, s, diff
    with nogil:
        for i in range(na):
            for j in range(nbb):
                s = 0.0
                for k in range(dim):
                    diff = a[i, k] - b[j, k]
                    s = s + diff * diff
                total = total + sqrt(s)
    return total / (na * nbb)

"""Pure-Python/numpy kernels. Reference behaviour for the compiled twin in _ckernels.pyx.

Floating-point operations are performed in the same order as the compiled
version so both backends return bit-identical results.
"""
from __future__ import annotations

import numpy as np


def best_triplet_pair(D, active, keys, R, margin):
    """Globally best merge under the triplet criterion.

    Returns ``(i, j, score, min_dist)``; ``min_dist`` is the smallest
    distance between any two active clusters.
    """
    idx = np.flatnonzero(np.asarray(active))
    m = idx.size
    if m < 2:
        raise ValueError("need at least two active clusters")
    keys = np.asarray(keys)
    sub = np.asarray(D)[np.ix_(idx, idx)].copy()
    np.fill_diagonal(sub, np.inf)
    ksub = keys[idx]
    r_cnt = min(R, m - 1)
    coef = margin / (max(2, r_cnt) - 1)

    order = np.lexsort((np.broadcast_to(ksub, sub.shape), sub), axis=1)[:, :r_cnt]
    dn = np.take_along_axis(sub, order, axis=1)

    scores = np.empty((m, r_cnt))
    for r in range(r_cnt):
        dij = dn[:, r]
        acc = np.zeros(m)
        for q in range(r_cnt):
            acc = acc + (dij - dn[:, q])
        scores[:, r] = dij + coef * acc

    ki = np.repeat(ksub, r_cnt)
    kj = ksub[order].ravel()
    flat = scores.ravel()
    best = np.lexsort((kj, ki, flat))[0]
    bi, br = divmod(int(best), r_cnt)
    i = int(idx[bi])
    j = int(idx[order[bi, br]])
    return i, j, float(flat[best]), float(sub.min())


def merge_rows(D, active, sizes, a, b):
    """Fold cluster ``b`` into ``a`` (average linkage), in place."""
    sa = sizes[a]
    sb = sizes[b]
    act = np.asarray(active).astype(bool)
    act[a] = act[b] = False
    ks = np.flatnonzero(act)
    new = (sa * D[a, ks] + sb * D[b, ks]) / (sa + sb)
    D[a, ks] = new
    D[ks, a] = new
    active[b] = 0
    sizes[a] = sa + sb


def earliest_start(starts, ends, ready, duration):
    """Earliest t >= ready such that [t, t+duration) avoids every busy interval.

    ``starts``/``ends`` describe disjoint intervals sorted by start.
    """
    t = ready
    for s, e in zip(starts, ends):
        if e <= t:
            continue
        if t + duration <= s:
            return t
        if e > t:
            t = e
    return t


def mean_cross_distance(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    diff = A[:, None, :] - B[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=-1)).mean())

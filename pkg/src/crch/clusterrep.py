"""Replication counts from unsupervised clustering of task features.

Pipeline: standardized features -> PCA (smallest basis reaching a variance
coverage threshold) -> agglomerative clustering with a triplet-style merge
criterion -> clusters ordered by size -> replication count = cluster rank.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _core
from .features import FeatureMatrix, extract, standardize
from .ingest import WorkflowSpec
from .model import mean_runtime


class ClusteringConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterParams:
    cov_threshold: float = 0.3
    target_k: int = 3
    R: int = 3
    margin: float = 0.5
    stop_percentile: float | None = 75.0


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray  # (k, n_features), rows orthonormal
    explained: np.ndarray  # variance fraction per kept component
    projected: np.ndarray  # (n_tasks, k)
    all_explained: np.ndarray = field(repr=False, default=None)

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca(m: FeatureMatrix | np.ndarray, cov_threshold: float) -> PcaResult:
    """Project onto the fewest principal axes whose cumulative variance share >= threshold."""
    if not 0 < cov_threshold <= 1:
        raise ClusteringConfigError(f"cov_threshold must be in (0, 1], got {cov_threshold}")
    x = np.asarray(m.values if isinstance(m, FeatureMatrix) else m, dtype=float)
    n, d = x.shape
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / max(n, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order].T
    # deterministic sign: largest-magnitude loading positive
    for v in evecs:
        if v[np.argmax(np.abs(v))] < 0:
            v *= -1
    total = evals.sum()
    if total <= 0:
        frac = np.zeros(d)
        k = 1
    else:
        frac = evals / total
        cum = np.cumsum(frac)
        k = int(np.searchsorted(cum, cov_threshold - 1e-12) + 1)
        k = min(k, d)
    comps = evecs[:k].copy()
    return PcaResult(comps, frac[:k].copy(), xc @ comps.T, frac)


def affinity(a: np.ndarray, b: np.ndarray) -> float:
    """Mean Euclidean distance over all cross pairs of two point sets."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("affinity of an empty cluster")
    return _core.mean_cross_distance(a, b)


def _as_points(c):
    arr = np.asarray(c, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def triplet_score(i, j, neighbors: Sequence, margin: float) -> float:
    """Merge score of cluster ``i`` with neighbour ``j``; lower is better.

    ``D_ij + margin/(R-1) * sum_k (D_ij - D_ik)`` over the R neighbours of ``i``.
    Clusters are point arrays (1-D arrays are read as 1-D points).
    """
    R = len(neighbors)
    if R < 2:
        raise ClusteringConfigError("triplet score needs at least two neighbours")
    pi = _as_points(i)
    dij = affinity(pi, _as_points(j))
    acc = 0.0
    for k in neighbors:
        acc += dij - affinity(pi, _as_points(k))
    return dij + margin / (R - 1) * acc


@dataclass(frozen=True)
class Merge:
    a: tuple[str, ...]
    b: tuple[str, ...]
    distance: float
    score: float
    n_clusters: int  # cluster count after this merge


@dataclass(frozen=True)
class Clustering:
    clusters: tuple[tuple[str, ...], ...]
    history: tuple[Merge, ...] = ()
    stopped_by: str = "target"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("step", "cluster_a", "cluster_b", "distance", "score", "n_clusters"))
            for s, mg in enumerate(self.history):
                w.writerow((s, " ".join(mg.a), " ".join(mg.b), repr(mg.distance), repr(mg.score),
                            mg.n_clusters))


def default_stop_threshold(points: np.ndarray, percentile: float = 75.0) -> float:
    p = _as_points(points)
    if len(p) < 2:
        return np.inf
    diff = p[:, None, :] - p[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    iu = np.triu_indices(len(p), 1)
    return float(np.percentile(dist[iu], percentile))


def agglomerate(points, target_k: int, R: int = 3, margin: float = 0.5, *,
                ids: Sequence[str] | None = None, threshold: float | None = None,
                stop_percentile: float | None = 75.0) -> Clustering:
    """Agglomerate singletons until ``target_k`` clusters remain or the closest
    pair of clusters is farther apart than the stop threshold.

    ``threshold`` overrides the default stop distance (the ``stop_percentile``
    of pairwise singleton distances); pass ``stop_percentile=None`` to disable it.
    """
    p = _as_points(points)
    n = len(p)
    if target_k < 1:
        raise ClusteringConfigError("target_k must be >= 1")
    if R < 2:
        raise ClusteringConfigError("R must be >= 2")
    if n < target_k:
        raise ClusteringConfigError(f"{n} points cannot form {target_k} clusters")
    if ids is None:
        width = len(str(n))
        ids = [f"p{i:0{width}d}" for i in range(n)]
    ids = list(ids)
    if threshold is None:
        threshold = default_stop_threshold(p, stop_percentile) if stop_percentile is not None else np.inf

    rank = {tid: r for r, tid in enumerate(sorted(ids))}
    keys = np.array([rank[t] for t in ids], dtype=np.int64)
    diff = p[:, None, :] - p[None, :, :]
    D = np.ascontiguousarray(np.sqrt((diff * diff).sum(-1)))
    active = np.ones(n, dtype=np.uint8)
    sizes = np.ones(n, dtype=float)
    members = {i: [ids[i]] for i in range(n)}

    history = []
    stopped = "target"
    count = n
    while count > target_k:
        i, j, score, min_dist = _core.best_triplet_pair(D, active, keys, R, margin)
        if min_dist > threshold:
            stopped = "threshold"
            break
        a, b = (i, j) if keys[i] < keys[j] else (j, i)
        dist = float(D[a, b])
        history.append(Merge(tuple(sorted(members[a])), tuple(sorted(members[b])), dist, score, count - 1))
        _core.merge_rows(D, active, sizes, a, b)
        keys[a] = min(keys[a], keys[b])
        members[a] = members[a] + members.pop(b)
        count -= 1
    clusters = tuple(tuple(sorted(members[k])) for k in sorted(members, key=lambda k: keys[k]))
    return Clustering(clusters, tuple(history), stopped)


@dataclass(frozen=True)
class ReplicationPlan:
    counts: Mapping[str, int]

    @classmethod
    def uniform(cls, task_ids: Sequence[str], copies: int) -> "ReplicationPlan":
        return cls({t: copies for t in task_ids})

    def total(self) -> int:
        return sum(self.counts.values())


def assign_counts(c: Clustering, mean_runtimes: Mapping[str, float] | None = None,
                  max_count: int | None = None) -> ReplicationPlan:
    """Rank clusters by size (desc), then mean runtime (desc), then smallest id;
    every task of the i-th cluster (1-based) gets ``min(i, max_count)`` copies."""
    mean_runtimes = mean_runtimes or {}

    def key(cl):
        mw = np.mean([mean_runtimes.get(t, 0.0) for t in cl])
        return (-len(cl), -mw, min(cl))

    counts = {}
    for i, cl in enumerate(sorted(c.clusters, key=key), start=1):
        rc = i if max_count is None else min(i, max_count)
        for t in cl:
            counts[t] = rc
    return ReplicationPlan(counts)


def replication_plan(spec: WorkflowSpec, params: ClusterParams = ClusterParams()):
    """Full pipeline; returns ``(plan, clustering, pca_result)``."""
    ids = spec.workflow.ids
    if params.target_k <= 1 or len(ids) <= 1:
        return ReplicationPlan.uniform(ids, 1), Clustering((tuple(ids),), ()), None
    fm = standardize(extract(spec))
    pr = pca(fm, params.cov_threshold)
    k = min(params.target_k, len(ids))
    cl = agglomerate(pr.projected, k, params.R, params.margin, ids=ids,
                     stop_percentile=params.stop_percentile)
    w = {t.id: mean_runtime(t) for t in spec.workflow.tasks}
    return assign_counts(cl, w, params.target_k), cl, pr

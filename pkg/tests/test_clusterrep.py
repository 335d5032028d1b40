import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crch.clusterrep import (ClusterParams, Clustering, ClusteringConfigError, affinity,
                             agglomerate, assign_counts, default_stop_threshold, pca,
                             replication_plan, triplet_score)
from crch.features import extract, standardize
from crch.ingest import GeneratorConfig, generate


def naive_affinity(a, b):
    tot = 0.0
    for p in a:
        for q in b:
            tot += math.sqrt(sum((x - y) ** 2 for x, y in zip(p, q)))
    return tot / (len(a) * len(b))


def naive_agglomerate(points, target_k, R, margin, threshold):
    """Reference: recompute every affinity from raw points at every step."""
    n = len(points)
    ids = [f"p{i:03d}" for i in range(n)]
    clusters = [[i] for i in range(n)]
    history = []
    while len(clusters) > target_k:
        keyed = sorted(clusters, key=lambda c: min(ids[i] for i in c))
        key = {tuple(c): k for k, c in enumerate(keyed)}
        pts = {tuple(c): [points[i] for i in c] for c in clusters}
        aff = {(tuple(a), tuple(b)): naive_affinity(pts[tuple(a)], pts[tuple(b)])
               for a in clusters for b in clusters if a is not b}
        if min(aff.values()) > threshold:
            break
        r = min(R, len(clusters) - 1)
        coef = margin / (max(2, r) - 1)
        best = None
        for a in clusters:
            ta = tuple(a)
            others = sorted((tuple(b) for b in clusters if b is not a), key=lambda b: (aff[ta, b], key[b]))
            nb = others[:r]
            for b in nb:
                s = aff[ta, b] + coef * sum(aff[ta, b] - aff[ta, k] for k in nb)
                cand = (s, key[ta], key[b], ta, b)
                if best is None or cand[:3] < best[:3]:
                    best = cand
        _, _, _, a, b = best
        history.append(tuple(sorted((tuple(sorted(ids[i] for i in a)), tuple(sorted(ids[i] for i in b))))))
        clusters = [c for c in clusters if tuple(c) not in (a, b)] + [list(a) + list(b)]
    return sorted(tuple(sorted(ids[i] for i in c)) for c in clusters), history


def test_affinity_examples():
    assert affinity([[0.0]], [[3.0]]) == 3.0
    assert affinity([[0.0], [2.0]], [[4.0], [6.0]]) == 4.0
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
    assert affinity(a, b) == pytest.approx(affinity(b, a), abs=1e-12)


def test_affinity_empty():
    with pytest.raises(ValueError):
        affinity(np.empty((0, 2)), [[1.0, 2.0]])


def test_triplet_score_examples():
    c1, c2, c3 = [0.0], [1.0], [4.0]
    assert triplet_score(c1, c2, [c2, c3], 0.5) == pytest.approx(-0.5)
    assert triplet_score(c1, c2, [c2, c3], 0.0) == pytest.approx(1.0)
    with pytest.raises(ClusteringConfigError):
        triplet_score(c1, c2, [c2], 0.5)


def test_triplet_prefers_nearer_neighbor():
    rng = np.random.default_rng(1)
    for _ in range(200):
        i, a, b = rng.uniform(-10, 10, size=3)
        near, far = sorted([a, b], key=lambda v: abs(v - i))
        nb = [[near], [far]]
        assert triplet_score([i], [near], nb, 0.5) <= triplet_score([i], [far], nb, 0.5) + 1e-12


def test_agglomerate_1d_example():
    pts = np.array([0.0, 0.1, 0.2, 5.0])
    cl = agglomerate(pts, 2, ids=["a", "b", "c", "d"])
    assert set(cl.clusters) == {("a", "b", "c"), ("d",)}
    assert len(cl.history) == 2


def test_agglomerate_noop_and_determinism():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(12, 2))
    cl = agglomerate(pts, 12)
    assert len(cl.clusters) == 12 and cl.history == ()
    assert agglomerate(pts, 3).history == agglomerate(pts, 3).history


def test_agglomerate_errors():
    with pytest.raises(ClusteringConfigError):
        agglomerate(np.zeros((2, 1)), 3)
    with pytest.raises(ClusteringConfigError):
        agglomerate(np.zeros((4, 1)), 2, R=1)
    with pytest.raises(ClusteringConfigError):
        agglomerate(np.zeros((4, 1)), 0)


@pytest.mark.parametrize("seed", range(25))
def test_agglomerate_matches_naive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 14))
    d = int(rng.integers(1, 4))
    pts = rng.normal(size=(n, d))
    k = int(rng.integers(1, 4))
    R = int(rng.integers(2, 5))
    margin = float(rng.uniform(0, 1))
    thr = default_stop_threshold(pts) if seed % 2 else math.inf
    cl = agglomerate(pts, k, R, margin, threshold=thr, ids=[f"p{i:03d}" for i in range(n)])
    want_clusters, want_hist = naive_agglomerate(pts.tolist(), k, R, margin, thr)
    assert sorted(cl.clusters) == want_clusters
    got_hist = [tuple(sorted((m.a, m.b))) for m in cl.history]
    assert got_hist == want_hist


def test_agglomerate_threshold_stop():
    pts = np.array([0.0, 1.0, 100.0, 200.0])
    cl = agglomerate(pts, 1, threshold=10.0)
    assert cl.stopped_by == "threshold"
    assert len(cl.clusters) == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 25), st.integers(1, 4), st.integers(0, 2**31))
def test_agglomerate_cover_and_merge_count(n, k, seed):
    k = min(k, n)
    pts = np.random.default_rng(seed).normal(size=(n, 2))
    cl = agglomerate(pts, k)
    flat = [t for c in cl.clusters for t in c]
    assert sorted(flat) == sorted(set(flat)) and len(flat) == n
    assert len(cl.history) == n - len(cl.clusters)
    assert len(cl.clusters) >= k


def corr2d():
    from crch.features import FeatureMatrix
    m = FeatureMatrix(("a", "b", "c"), ("x", "y"), np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
    return standardize(m)


def test_pca_correlated():
    r = pca(corr2d(), 0.8)
    assert r.k == 1
    assert r.explained[0] == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(np.abs(r.components[0]), [2 ** -0.5] * 2, atol=1e-12)


def test_pca_full_threshold():
    x = np.random.default_rng(0).normal(size=(40, 4))
    assert pca(x, 1.0).k == 4


def test_pca_generated_threshold_08():
    spec = generate(GeneratorConfig("layered-random", 100, seed=7))
    r = pca(standardize(extract(spec)), 0.8)
    assert r.k <= 5
    assert r.explained.sum() >= 0.8 - 1e-12


@pytest.mark.parametrize("thr", [0.0, -0.1, 1.2])
def test_pca_bad_threshold(thr):
    with pytest.raises(ClusteringConfigError):
        pca(np.eye(3), thr)


def test_pca_projection():
    x = np.random.default_rng(5).normal(size=(20, 3))
    r = pca(x, 0.9)
    np.testing.assert_allclose(r.projected, (x - x.mean(0)) @ r.components.T, atol=1e-12)


def test_assign_counts_examples():
    c = Clustering((("a", "b", "c"), ("d",)))
    assert dict(assign_counts(c).counts) == {"a": 1, "b": 1, "c": 1, "d": 2}
    assert set(assign_counts(Clustering((("a", "b"),))).counts.values()) == {1}
    c = Clustering((("a", "b"), ("c", "d")))
    plan = assign_counts(c, {"a": 1.0, "b": 1.0, "c": 9.0, "d": 9.0})
    assert plan.counts["c"] == 1 and plan.counts["a"] == 2


def test_assign_counts_clamp_and_order_free():
    c = Clustering((("a",), ("b", "c"), ("d", "e", "f"), ("g", "h", "i", "j")))
    plan = assign_counts(c, None, max_count=3)
    assert plan.counts["a"] == 3 and plan.counts["b"] == 3 and plan.counts["g"] == 1
    rev = Clustering(tuple(reversed(c.clusters)))
    assert dict(assign_counts(rev, None, 3).counts) == dict(plan.counts)


def test_replication_plan_pipeline():
    spec = generate(GeneratorConfig("layered-random", 100, seed=7))
    plan, cl, pr = replication_plan(spec, ClusterParams())
    assert set(plan.counts) == set(spec.workflow.ids)
    assert set(plan.counts.values()) <= {1, 2, 3}
    assert len(cl.clusters) >= 3
    sizes = sorted((len(c) for c in cl.clusters), reverse=True)
    one = [t for t, v in plan.counts.items() if v == 1]
    assert len(one) == sizes[0]


def test_dendrogram_csv(tmp_path):
    cl = agglomerate(np.array([0.0, 0.1, 0.2, 5.0]), 1, stop_percentile=None)
    p = tmp_path / "d.csv"
    cl.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0].startswith("step,") and len(rows) == 4

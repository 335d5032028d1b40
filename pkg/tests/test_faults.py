import logging
import math

import numpy as np
import pytest

from crch.faults import (PROFILES, FailureTrace, build_trace, downtime_overlap, empty_trace,
                         profile, sample_mttr, sample_size)
from crch.model import make_pool

POOL = make_pool([f"v{i:02d}" for i in range(20)], 1.0, reliable=[f"v{i:02d}" for i in range(4)])


def test_profiles_defaults():
    assert [PROFILES[n].mtbf_scale for n in ("stable", "normal", "unstable")] == [60, 30, 10]
    assert PROFILES["unstable"].busy_as_failure is False
    assert PROFILES["stable"].busy_as_failure and PROFILES["normal"].busy_as_failure
    for n in ("stable", "normal", "unstable"):
        assert 11.5 <= PROFILES[n].mtbf_shape <= 12.5
        assert 1.5 <= PROFILES[n].size_shape <= 2.4
    with pytest.raises(ValueError):
        profile("chaotic")
    with pytest.raises(ValueError):
        profile("stable", mttr_sigma=0.0)


def test_trace_deterministic():
    a = build_trace(PROFILES["normal"], POOL, 500.0, 11)
    b = build_trace(PROFILES["normal"], POOL, 500.0, 11)
    assert a == b
    assert a != build_trace(PROFILES["normal"], POOL, 500.0, 12)


@pytest.mark.parametrize("env", ["stable", "normal", "unstable"])
def test_trace_invariants(env):
    for seed in range(20):
        tr = build_trace(PROFILES[env], POOL, 300.0, seed)
        assert not tr.fvm & POOL.reliable
        for vm, iv in tr.downtimes.items():
            for x, y in iv:
                assert 0 <= x < y <= 300.0
            for (x0, y0), (x1, y1) in zip(iv, iv[1:]):
                assert y0 < x1


@pytest.mark.parametrize("env,target", [("stable", 1), ("normal", 3), ("unstable", 6)])
def test_mean_mttr(env, target):
    p = PROFILES[env]
    x = sample_mttr(p, 10_000, np.random.default_rng(0))
    assert x.mean() == pytest.approx(p.mttr_median * math.exp(p.mttr_sigma ** 2 / 2), rel=0.03)
    assert x.mean() == pytest.approx(target, rel=0.15)


@pytest.mark.parametrize("env,target", [("stable", 1), ("normal", 2), ("unstable", 3)])
def test_mean_episode_size(env, target):
    x = sample_size(PROFILES[env], 20_000, np.random.default_rng(1))
    assert x.min() >= 1
    assert x.mean() == pytest.approx(target, rel=0.05)


def test_mttr_ordering_over_batches():
    for batch in range(3):
        means = []
        for env in ("stable", "normal", "unstable"):
            dur = []
            for seed in range(100):
                tr = build_trace(PROFILES[env], POOL, 200.0, 1000 * batch + seed)
                dur += [y - x for iv in tr.downtimes.values() for x, y in iv]
            means.append(np.mean(dur))
        assert means[0] < means[1] < means[2]


def test_shorter_mtbf_more_downtime():
    base = PROFILES["normal"]
    tight = profile("normal", mtbf_scale=base.mtbf_scale / 2)
    tot_a = sum(build_trace(base, POOL, 400.0, s).total_downtime() for s in range(60))
    tot_b = sum(build_trace(tight, POOL, 400.0, s).total_downtime() for s in range(60))
    assert tot_b >= tot_a


def test_all_reliable_warns(caplog):
    pool = make_pool(["a", "b"], 1.0, reliable=["a", "b"])
    with caplog.at_level(logging.WARNING):
        tr = build_trace(PROFILES["unstable"], pool, 100.0, 0)
    assert tr.fvm == frozenset()
    assert "reliable" in caplog.text


def test_none_profile_and_horizon():
    assert build_trace(PROFILES["none"], POOL, 100.0, 0).downtimes == {}
    with pytest.raises(ValueError):
        build_trace(PROFILES["stable"], POOL, 0.0, 0)


def linear_next(iv, start, end):
    for x, y in iv:
        if start <= x < end:
            return (x, y)
    return None


def test_downtime_overlap_examples():
    tr = FailureTrace(("a", "b"), {"a": ((5.0, 8.0), (12.0, 13.0))}, 50.0)
    assert downtime_overlap(tr, "b", 0, 10) is None
    assert downtime_overlap(tr, "a", 0, 10) == (5.0, 8.0)
    assert downtime_overlap(tr, "a", 6, 7, mode="containing") == (5.0, 8.0)
    assert downtime_overlap(tr, "a", 8, 9, mode="containing") is None
    assert downtime_overlap(tr, "a", 0, 4) is None
    with pytest.raises(KeyError):
        downtime_overlap(tr, "zz", 0, 1)
    with pytest.raises(ValueError):
        downtime_overlap(tr, "a", 3, 1)


def test_downtime_overlap_matches_linear_scan():
    rng = np.random.default_rng(4)
    tr = build_trace(PROFILES["unstable"], POOL, 300.0, 4)
    for vm in tr.fvm:
        iv = tr.intervals(vm)
        for _ in range(50):
            a = float(rng.uniform(0, 300))
            b = a + float(rng.uniform(0, 50))
            assert downtime_overlap(tr, vm, a, b) == linear_next(iv, a, b)
            want = next(((x, y) for x, y in iv if x <= a < y), None)
            assert downtime_overlap(tr, vm, a, b, mode="containing") == want


def test_trace_json_round_trip():
    tr = build_trace(PROFILES["normal"], POOL, 250.0, 3)
    again = FailureTrace.from_json(tr.to_json())
    assert again == tr
    assert FailureTrace.from_json(empty_trace(POOL).to_json()).horizon == math.inf


def test_overlapping_intervals_merge():
    doc = '{"vms": ["a"], "downtimes": {"a": [[5, 8], [1, 3], [7, 10]]}, "horizon": 20}'
    assert FailureTrace.from_json(doc).intervals("a") == ((1.0, 3.0), (5.0, 10.0))

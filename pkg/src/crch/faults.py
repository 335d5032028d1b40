"""VM failure environments and sampled downtime traces.

Failure episodes arrive with Weibull inter-arrival gaps; each episode takes
down ceil(Weibull) unreliable VMs, chosen uniformly, for a log-normal repair
time. Reliable VMs never fail.
"""
from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import ResourcePool

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvironmentProfile:
    name: str
    mtbf_shape: float
    mtbf_scale: float  # minutes between failure episodes
    size_shape: float
    size_scale: float
    mttr_median: float  # minutes
    mttr_sigma: float
    busy_as_failure: bool = True

    def __post_init__(self):
        for f in ("mtbf_shape", "mtbf_scale", "size_shape", "size_scale", "mttr_median", "mttr_sigma"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be positive")

    @property
    def mean_mttr(self) -> float:
        return self.mttr_median * math.exp(self.mttr_sigma ** 2 / 2)

    @property
    def fails(self) -> bool:
        return math.isfinite(self.mtbf_scale)


PROFILES = {
    "stable": EnvironmentProfile("stable", 12.0, 60.0, 1.5, 0.35, 1.0, 0.5, True),
    "normal": EnvironmentProfile("normal", 12.0, 30.0, 2.0, 1.7, 3.0, 0.5, True),
    "unstable": EnvironmentProfile("unstable", 12.0, 10.0, 2.4, 2.8, 6.0, 0.5, False),
    # failure-free reference environment
    "none": EnvironmentProfile("none", 12.0, math.inf, 1.0, 1.0, 1.0, 0.5, True),
}


def profile(name: str, **overrides) -> EnvironmentProfile:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {', '.join(PROFILES)}") from None
    return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class FailureTrace:
    vms: tuple[str, ...]
    downtimes: dict[str, tuple[tuple[float, float], ...]] = field(default_factory=dict)
    horizon: float = math.inf
    seed: int | None = None

    @property
    def fvm(self) -> frozenset[str]:
        return frozenset(v for v, iv in self.downtimes.items() if iv)

    def intervals(self, vm: str) -> tuple[tuple[float, float], ...]:
        if vm not in self.vms:
            raise KeyError(f"unknown VM {vm!r}")
        return self.downtimes.get(vm, ())

    def containing(self, vm: str, t: float) -> tuple[float, float] | None:
        """Downtime (X, Y) with X <= t < Y."""
        iv = self.intervals(vm)
        i = bisect.bisect_right(iv, (t, math.inf)) - 1
        if i >= 0 and iv[i][0] <= t < iv[i][1]:
            return iv[i]
        return None

    def next_from(self, vm: str, t: float) -> tuple[float, float] | None:
        """Earliest downtime starting at or after ``t``."""
        iv = self.intervals(vm)
        i = bisect.bisect_left(iv, (t, -math.inf))
        return iv[i] if i < len(iv) else None

    def total_downtime(self) -> float:
        return sum(y - x for iv in self.downtimes.values() for x, y in iv)

    def to_json(self) -> str:
        doc = {
            "horizon": self.horizon if math.isfinite(self.horizon) else None,
            "seed": self.seed,
            "vms": list(self.vms),
            "downtimes": {v: [list(p) for p in self.downtimes[v]] for v in sorted(self.downtimes)},
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str | bytes) -> "FailureTrace":
        doc = json.loads(text)
        horizon = doc.get("horizon")
        dts = {v: _merge([tuple(map(float, p)) for p in iv]) for v, iv in doc["downtimes"].items()}
        return cls(tuple(doc["vms"]), dts, math.inf if horizon is None else float(horizon),
                   doc.get("seed"))


def _merge(intervals) -> tuple[tuple[float, float], ...]:
    out: list[list[float]] = []
    for x, y in sorted(intervals):
        if out and x <= out[-1][1]:
            out[-1][1] = max(out[-1][1], y)
        else:
            out.append([x, y])
    return tuple((x, y) for x, y in out if y > x)


def empty_trace(pool: ResourcePool, horizon: float = math.inf) -> FailureTrace:
    return FailureTrace(pool.vms, {}, horizon, None)


def sample_mttr(p: EnvironmentProfile, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.lognormal(math.log(p.mttr_median), p.mttr_sigma, size=n)


def sample_size(p: EnvironmentProfile, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.maximum(1, np.ceil(p.size_scale * rng.weibull(p.size_shape, size=n))).astype(int)


def build_trace(p: EnvironmentProfile, pool: ResourcePool, horizon: float, seed: int) -> FailureTrace:
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    unreliable = list(pool.unreliable)
    if not p.fails:
        return FailureTrace(pool.vms, {}, horizon, seed)
    if not unreliable:
        log.warning("every VM is reliable; failure trace is empty")
        return FailureTrace(pool.vms, {}, horizon, seed)
    rng = np.random.default_rng(seed)
    raw: dict[str, list[tuple[float, float]]] = {}
    # stationary start: first episode lands uniformly inside the first gap
    t = rng.uniform() * p.mtbf_scale * rng.weibull(p.mtbf_shape)
    while t < horizon:
        k = min(int(sample_size(p, 1, rng)[0]), len(unreliable))
        hit = rng.choice(len(unreliable), size=k, replace=False)
        for i in hit:
            dur = float(sample_mttr(p, 1, rng)[0])
            raw.setdefault(unreliable[i], []).append((float(t), float(min(t + dur, horizon))))
        t += p.mtbf_scale * rng.weibull(p.mtbf_shape)
    return FailureTrace(pool.vms, {v: _merge(iv) for v, iv in raw.items()}, horizon, seed)


def downtime_overlap(trace: FailureTrace, vm: str, start: float, end: float,
                     mode: str = "next") -> tuple[float, float] | None:
    """Downtime interval relevant to the window [start, end].

    ``mode="next"``: earliest interval with X >= start and X < end.
    ``mode="containing"``: the interval that contains ``start``.
    """
    if start > end:
        raise ValueError("start must not exceed end")
    if mode == "containing":
        return trace.containing(vm, start)
    if mode != "next":
        raise ValueError(f"unknown mode {mode!r}")
    iv = trace.next_from(vm, start)
    if iv is not None and iv[0] < end:
        return iv
    return None

"""Run metrics (TET, usage, wastage, SLR), aggregation and the checkpoint-interval sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .clusterrep import ReplicationPlan
from .faults import EnvironmentProfile, build_trace
from .ingest import WorkflowSpec
from .scheduler import Schedule, b_levels, critical_path, overprovision, tet_perfect
from .simruntime import CheckpointConfig, ExecutionLog, simulate


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class RunMetrics:
    tet: float
    usage: float
    wastage: float
    slr: float
    completed: bool
    resubmissions: int
    replica_executions: int


NUMERIC = ("tet", "usage", "wastage", "slr", "resubmissions", "replica_executions")


def slr_denominator(s: Schedule, spec: WorkflowSpec) -> float:
    path = critical_path(s, spec)
    if not path:
        raise MetricsError("empty schedule")
    return b_levels(spec)[path[0].origin]


def compute(log: ExecutionLog, s: Schedule, spec: WorkflowSpec) -> RunMetrics:
    if set(log.copies) != set(s.assignments):
        raise MetricsError("execution log does not belong to this schedule")
    usage = sum(c.busy for c in log.copies.values())
    if log.completed:
        tet = log.finish_time
        wastage = 0.0
        for c in log.copies.values():
            if log.winners.get(c.origin) == c.copy:
                # after a move the copy restarts from zero, so earlier segments count in full
                wastage += sum(seg.busy if seg.vm != c.vm else seg.lost
                               for seg in c.segments if seg.outcome == "failed")
            else:
                wastage += c.busy
    else:
        tet = log.horizon
        wastage = usage
    wastage = min(wastage, usage)
    return RunMetrics(
        tet=tet,
        usage=usage,
        wastage=wastage,
        slr=tet / slr_denominator(s, spec),
        completed=log.completed,
        resubmissions=sum(1 for e in log.events if e.kind == "resubmit"),
        replica_executions=sum(1 for c in log.copies.values() if c.ordinal > 0 and c.segments),
    )


@dataclass(frozen=True)
class Summary:
    reps: int
    mean: dict
    std: dict
    completion_rate: float

    def row(self) -> dict:
        out = {f"{k}_mean": v for k, v in self.mean.items()}
        out.update({f"{k}_std": v for k, v in self.std.items()})
        out["completion_rate"] = self.completion_rate
        out["reps"] = self.reps
        return out


def aggregate(runs: Sequence[RunMetrics], reps: int | None = None) -> Summary:
    """Population mean/std of every numeric field over all runs, failed ones included."""
    if not runs:
        raise MetricsError("no runs to aggregate")
    reps = len(runs) if reps is None else reps
    if reps < 1:
        raise MetricsError("reps must be >= 1")
    mean, std = {}, {}
    for name in NUMERIC:
        # sorting makes the float sums independent of run order
        x = np.sort(np.array([float(getattr(r, name)) for r in runs]))
        mean[name] = float(x.mean())
        std[name] = float(x.std())
    rate = sum(r.completed for r in runs) / reps
    return Summary(reps, mean, std, rate)


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    tet: float
    tet_no_co: float
    co: float
    completion_rate: float


def lambda_sweep(spec: WorkflowSpec, plan: ReplicationPlan | None, p: EnvironmentProfile,
                 lambdas: Sequence[float], gamma: float, seeds: Sequence[int], *,
                 horizon: float | None = None, resubmit: bool = True) -> list[SweepPoint]:
    """Mean TET per checkpoint interval over paired seeds.

    Each interval is also run with zero overhead on the same traces, giving
    TET_noCO; the overhead component is CO = TET_noCO * gamma / lam.
    """
    if len(lambdas) < 2:
        raise MetricsError("need at least two lambda values")
    if not seeds:
        raise MetricsError("need at least one seed")
    s = overprovision(spec, plan)
    if horizon is None:
        horizon = default_horizon(spec, s)
    traces = [build_trace(p, spec.pool, horizon, seed) for seed in seeds]
    out = []
    for lam in lambdas:
        with_co, without = [], []
        for tr in traces:
            for g, acc in ((gamma, with_co), (0.0, without)):
                lg = simulate(s, tr, CheckpointConfig(lam, g), spec,
                              busy_as_failure=p.busy_as_failure, resubmit=resubmit)
                acc.append(compute(lg, s, spec))
        tet = float(np.mean([m.tet for m in with_co]))
        tet0 = float(np.mean([m.tet for m in without]))
        rate = sum(m.completed for m in with_co) / len(with_co)
        out.append(SweepPoint(lam, tet, tet0, tet0 * gamma / lam, rate))
    return out


def argmin_lambda(curve: Sequence[SweepPoint]) -> float:
    """Interval with the smallest mean TET; ties go to the larger interval."""
    return min(curve, key=lambda pt: (pt.tet, -pt.lam)).lam


def default_horizon(spec: WorkflowSpec, s: Schedule | None = None) -> float:
    """3 x the summed mean runtimes, and at least 3 x the static makespan."""
    total = sum(float(np.mean(t.runtimes)) for t in spec.workflow.tasks)
    h = 3.0 * total
    if s is not None:
        h = max(h, 3.0 * tet_perfect(s))
    return h if h > 0 else math.inf


def metric_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(RunMetrics))

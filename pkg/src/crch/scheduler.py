"""Static scheduling: upward (B-level) ranks, insertion-based HEFT and replica over-provisioning."""
from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from typing import Mapping

from . import _core
from .clusterrep import ReplicationPlan
from .ingest import WorkflowSpec
from .model import mean_runtime, mean_transfer

EPS = 1e-9


def copy_id(task: str, ordinal: int) -> str:
    return f"{task}#{ordinal}"


@dataclass(frozen=True)
class Assignment:
    copy: str
    origin: str
    ordinal: int
    vm: str
    est: float
    eft: float


@dataclass
class Schedule:
    assignments: dict[str, Assignment] = field(default_factory=dict)
    rank: dict[str, float] = field(default_factory=dict)

    def copies_of(self, task: str) -> list[Assignment]:
        return sorted((a for a in self.assignments.values() if a.origin == task),
                      key=lambda a: a.ordinal)

    def rep_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for a in self.assignments.values():
            out[a.origin] = out.get(a.origin, 0) + 1
        return out

    def on_vm(self, vm: str) -> list[Assignment]:
        return sorted((a for a in self.assignments.values() if a.vm == vm), key=lambda a: a.est)

    def originals(self) -> list[Assignment]:
        return [a for a in self.assignments.values() if a.ordinal == 0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("copy", "origin", "ordinal", "vm", "est", "eft"))
            for a in sorted(self.assignments.values(), key=lambda a: (a.est, a.vm, a.copy)):
                w.writerow((a.copy, a.origin, a.ordinal, a.vm, repr(a.est), repr(a.eft)))


def b_levels(spec: WorkflowSpec) -> dict[str, float]:
    """b(t) = w_t + max_children (e(t,c) + b(c)); exit tasks b = w_t."""
    wf, pool = spec.workflow, spec.pool
    b: dict[str, float] = {}
    for t in reversed(wf.topological_order()):
        tail = max((mean_transfer(d, pool) + b[d.child] for d in wf.children[t]), default=0.0)
        b[t] = mean_runtime(wf.by_id[t]) + tail
    return b


def rank_order(spec: WorkflowSpec, rank: Mapping[str, float] | None = None) -> list[str]:
    rank = rank if rank is not None else b_levels(spec)
    return sorted(spec.workflow.ids, key=lambda t: (-rank[t], t))


class _Timeline:
    """Per-VM busy intervals kept sorted by start."""

    def __init__(self, vms):
        self.starts = {v: [] for v in vms}
        self.ends = {v: [] for v in vms}

    def earliest(self, vm, ready, duration):
        return _core.earliest_start(self.starts[vm], self.ends[vm], ready, duration)

    def insert(self, vm, start, end):
        i = bisect.bisect_right(self.starts[vm], start)
        self.starts[vm].insert(i, start)
        self.ends[vm].insert(i, end)


class _Placer:
    def __init__(self, spec: WorkflowSpec):
        self.spec = spec
        self.wf = spec.workflow
        self.pool = spec.pool
        self.vmi = spec.pool.index
        self.timeline = _Timeline(spec.pool.vms)
        self.schedule = Schedule()
        self.placed: dict[str, list[Assignment]] = {t: [] for t in self.wf.ids}

    def ready_time(self, task: str, vm: str, originals_only: bool) -> float:
        ready = 0.0
        for d in self.wf.parents[task]:
            copies = self.placed[d.parent]
            if originals_only:
                copies = [a for a in copies if a.ordinal == 0]
            arrive = min(a.eft + self.pool.transfer_time(d.data, a.vm, vm) for a in copies)
            if arrive > ready:
                ready = arrive
        return ready

    def best_slot(self, task: str, vms, originals_only: bool):
        t = self.wf.by_id[task]
        best = None
        for vm in vms:
            run = t.runtimes[self.vmi[vm]]
            ready = self.ready_time(task, vm, originals_only)
            est = self.timeline.earliest(vm, ready, run)
            cand = (est + run, self.vmi[vm], est, vm)
            if best is None or cand < best:
                best = cand
        eft, _, est, vm = best
        return vm, est, eft

    def place(self, task: str, ordinal: int, vm: str, est: float, eft: float) -> Assignment:
        a = Assignment(copy_id(task, ordinal), task, ordinal, vm, est, eft)
        self.timeline.insert(vm, est, eft)
        self.schedule.assignments[a.copy] = a
        self.placed[task].append(a)
        return a

    def place_original(self, task: str) -> Assignment:
        vm, est, eft = self.best_slot(task, self.pool.vms, originals_only=True)
        return self.place(task, 0, vm, est, eft)

    def place_replicas(self, task: str, count: int) -> None:
        for ordinal in range(1, count):
            used = {a.vm for a in self.placed[task]}
            vms = [v for v in self.pool.vms if v not in used] or list(self.pool.vms)
            vm, est, eft = self.best_slot(task, vms, originals_only=False)
            self.place(task, ordinal, vm, est, eft)


def heft(spec: WorkflowSpec) -> Schedule:
    """Insertion-based HEFT: rank order, each task on the VM with minimum finish time."""
    return overprovision(spec, None)


def overprovision(spec: WorkflowSpec, plan: ReplicationPlan | None) -> Schedule:
    """HEFT placement of originals plus replicas per ``plan``.

    A task's replicas are placed as soon as every one of its original
    children has been placed; replicas of exit tasks are placed last, in
    rank order.
    """
    wf = spec.workflow
    rank = b_levels(spec)
    order = rank_order(spec, rank)
    counts = {t: 1 for t in wf.ids} if plan is None else dict(plan.counts)
    missing = set(wf.ids) - set(counts)
    if missing:
        raise ValueError(f"replication plan misses tasks: {sorted(missing)[:5]}")
    if any(c < 1 for c in counts.values()):
        raise ValueError("replication counts must be >= 1")

    placer = _Placer(spec)
    placer.schedule.rank = rank
    done_orig: set[str] = set()
    replicated: set[str] = set()
    for t in order:
        placer.place_original(t)
        done_orig.add(t)
        parents = sorted({d.parent for d in wf.parents[t]}, key=lambda p: (-rank[p], p))
        for p in parents:
            if p in replicated:
                continue
            if all(d.child in done_orig for d in wf.children[p]):
                placer.place_replicas(p, counts[p])
                replicated.add(p)
    for t in order:
        if t not in replicated:
            placer.place_replicas(t, counts[t])
            replicated.add(t)
    return placer.schedule


def tet_perfect(s: Schedule) -> float:
    """Failure-free makespan: latest estimated finish time over all copies."""
    return max((a.eft for a in s.assignments.values()), default=0.0)


def critical_path(s: Schedule, spec: WorkflowSpec) -> list[Assignment]:
    """Backtrack from the latest-finishing copy through binding predecessors.

    A predecessor is a copy of a parent task (finish + transfer) or the
    previous copy on the same VM (finish). Exact matches with the current
    start are preferred; otherwise the latest-arriving predecessor (an idle
    gap) is taken. Ties prefer the transfer-inclusive parent edge, then the
    smaller copy id.
    """
    if not s.assignments:
        return []
    wf, pool = spec.workflow, spec.pool
    cur = max(s.assignments.values(), key=lambda a: (a.eft, a.copy))
    path = [cur]
    by_task: dict[str, list[Assignment]] = {}
    for a in s.assignments.values():
        by_task.setdefault(a.origin, []).append(a)
    while True:
        cands = []
        for d in wf.parents[cur.origin]:
            for a in by_task.get(d.parent, ()):
                arrive = a.eft + pool.transfer_time(d.data, a.vm, cur.vm)
                if arrive <= cur.est + EPS:
                    cands.append((arrive, 1, a.eft - arrive, a.copy, a))
        for a in s.assignments.values():
            if a.vm == cur.vm and a.eft <= cur.est + EPS and a is not cur:
                cands.append((a.eft, 0, 0.0, a.copy, a))
        if not cands:
            break
        top = max(c[0] for c in cands)
        tied = [c for c in cands if top - c[0] <= EPS]
        # prefer the parent edge (kind 1) carrying the largest transfer, then smaller id
        tied.sort(key=lambda c: (-c[1], c[2], c[3]))
        cur = tied[0][4]
        path.append(cur)
    path.reverse()
    return path


def path_length(path: list[Assignment]) -> float:
    """Runtime + transfer + idle time along a backtracked path (= its last finish time)."""
    if not path:
        return 0.0
    total = path[0].est
    for prev, nxt in zip(path, path[1:]):
        total += (prev.eft - prev.est) + (nxt.est - prev.eft)
    return total + (path[-1].eft - path[-1].est)

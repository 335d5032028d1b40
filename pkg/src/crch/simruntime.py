"""Discrete-event replay of a static schedule under VM downtimes.

Every copy of a task runs on its scheduled VM no earlier than its estimated
start. Execution is interrupted by downtimes of failure-prone VMs; progress
survives only up to the last completed checkpoint. When the last live copy
of a task fails, the task is resubmitted once: either moved to the
non-failing VM with the smallest start estimate, or left to resume from its
checkpoint when the failed VM comes back.

Checkpoints are taken after every ``lam`` minutes of useful work of a copy
and each costs ``gamma`` minutes, so an uninterrupted copy of runtime ``r``
occupies its VM for ``r + floor(r / lam) * gamma`` minutes.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

from .faults import EnvironmentProfile, FailureTrace
from .ingest import WorkflowSpec
from .scheduler import Schedule

PENDING, WAITING, RUNNING, FAILED, DONE, TERMINATED = (
    "pending", "waiting", "running", "failed", "done", "terminated")

EVENT_KINDS = ("start", "checkpoint", "vm_down", "vm_up", "copy_failed", "resubmit",
               "wait_busy", "terminate_replica", "complete")

# same-time ordering: completions first, then VM state changes, then readiness
_COMPLETE, _FAIL, _VM_UP, _VM_DOWN, _READY = range(5)

_TOL = 1e-9


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class CheckpointConfig:
    lam: float = 2.0
    gamma: float = 0.0
    mode: str = "fixed"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("checkpoint interval must be positive")
        if self.gamma < 0:
            raise ValueError("checkpoint overhead must be non-negative")
        if self.gamma >= self.lam:
            raise ValueError("checkpoint overhead must be smaller than the interval")
        if self.mode not in ("fixed", "auto"):
            raise ValueError(f"unknown checkpoint mode {self.mode!r}")


def n_checkpoints(work: float, lam: float) -> int:
    """Checkpoints completed once ``work`` minutes of useful work are done."""
    return int(math.floor(work / lam + _TOL))


def auto_lambda(p: EnvironmentProfile, gamma: float) -> float:
    """Checkpoint interval sqrt(2 * gamma * MTBF) clamped to [2*gamma, 10*median MTTR]."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not p.fails:
        return 10.0 * p.mttr_median
    lam = math.sqrt(2.0 * gamma * p.mtbf_scale)
    lam = min(lam, 10.0 * p.mttr_median)
    return max(lam, 2.0 * gamma)


@dataclass
class Segment:
    vm: str
    start: float
    end: float
    work_start: float
    work_end: float
    checkpoints: int  # completed within this segment
    overhead: float  # minutes spent on completed checkpoint writes
    outcome: str  # done | failed | aborted
    lost: float = 0.0  # minutes after the last completed checkpoint, for failed segments
    partial_write: bool = False  # interrupted while writing a checkpoint

    @property
    def busy(self) -> float:
        return self.end - self.start


@dataclass
class CopyState:
    copy: str
    origin: str
    ordinal: int
    vm: str
    est: float
    status: str = PENDING
    ast: float | None = None
    aft: float | None = None
    alpha: int = 0
    work: float = 0.0  # useful work secured by checkpoints
    resubmitted: bool = False
    segments: list[Segment] = field(default_factory=list)

    @property
    def busy(self) -> float:
        return sum(s.busy for s in self.segments)

    @property
    def overhead(self) -> float:
        return sum(s.overhead for s in self.segments)


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    copy: str | None
    vm: str | None
    detail: str = ""


@dataclass(frozen=True)
class StoreEntry:
    vm: str
    handle: str
    replicated_payload: bool


class GlobalStore(dict):
    """task id -> StoreEntry of the first completed copy."""


@dataclass
class ExecutionLog:
    events: list[Event]
    copies: dict[str, CopyState]
    failures: dict[str, int]
    store: GlobalStore
    task_done: dict[str, float]
    winners: dict[str, str]
    completed: bool
    finish_time: float | None
    horizon: float
    error: str | None = None

    def kinds(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def to_ndjson(self) -> str:
        lines = [json.dumps({"time": e.time, "kind": e.kind, "copy": e.copy, "vm": e.vm,
                             "detail": e.detail}) for e in self.events]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class Move:
    vm: str
    est: float


@dataclass(frozen=True)
class Stay:
    until: float
    remaining: float


def decide_resubmission(alpha: int, lam: float, runtime: float, y: float,
                        best: tuple[str, float] | None) -> Move | Stay:
    """Move to ``best = (vm, est)`` iff est + saved work < y, else resume at y.

    Saved work ``alpha * lam`` is what a move would have to re-execute.
    """
    saved = alpha * lam
    if best is not None and best[1] + saved < y:
        return Move(best[0], best[1])
    return Stay(y, max(runtime - saved, 0.0))


def _progress(w0: float, runtime: float, lam: float, gamma: float, elapsed: float):
    """Advance a copy that starts with ``w0`` work by ``elapsed`` wall minutes.

    Returns (work, completed_checkpoints, wall_at_last_checkpoint, in_write);
    ``in_write`` flags an interruption while a checkpoint was being written.
    """
    work, ck, wall, last_ck_wall = w0, 0, 0.0, 0.0
    while True:
        boundary = (n_checkpoints(work, lam) + 1) * lam
        target = min(boundary, runtime)
        chunk = target - work
        if elapsed - wall < chunk:
            return work + (elapsed - wall), ck, last_ck_wall, False
        wall += chunk
        work = target
        if boundary > runtime + _TOL:
            return work, ck, last_ck_wall, False
        if elapsed - wall < gamma:
            return work, ck, last_ck_wall, True
        wall += gamma
        ck += 1
        last_ck_wall = wall
        if work >= runtime - _TOL:
            return work, ck, last_ck_wall, False


def busy_duration(runtime: float, w0: float, cp: CheckpointConfig) -> float:
    """Wall minutes to finish from ``w0`` with no interruption."""
    return (runtime - w0) + (n_checkpoints(runtime, cp.lam) - n_checkpoints(w0, cp.lam)) * cp.gamma


class _Engine:
    def __init__(self, s: Schedule, trace: FailureTrace, cp: CheckpointConfig, spec: WorkflowSpec,
                 busy_as_failure: bool, resubmit: bool):
        self.s, self.trace, self.cp, self.spec = s, trace, cp, spec
        self.wf, self.pool = spec.workflow, spec.pool
        self.vmi = spec.pool.index
        self.busy_as_failure = busy_as_failure
        self.resubmit = resubmit
        self.horizon = trace.horizon
        self.fvm = trace.fvm
        self.nonfailing = [v for v in self.pool.vms if v not in self.fvm]

        self.copies: dict[str, CopyState] = {}
        self.by_task: dict[str, list[CopyState]] = {t: [] for t in self.wf.ids}
        for a in sorted(s.assignments.values(), key=lambda a: (a.origin, a.ordinal)):
            c = CopyState(a.copy, a.origin, a.ordinal, a.vm, a.est)
            self.copies[a.copy] = c
            self.by_task[a.origin].append(c)
        self.rep_count = {t: len(cs) for t, cs in self.by_task.items()}
        self.failures = {t: 0 for t in self.wf.ids}
        self.task_done: dict[str, float] = {}
        self.winners: dict[str, str] = {}
        self.store = GlobalStore()

        self.running: dict[str, CopyState | None] = {v: None for v in self.pool.vms}
        self.running_until: dict[str, float] = {v: 0.0 for v in self.pool.vms}
        self.queue: dict[str, list] = {v: [] for v in self.pool.vms}
        self.seg_start: dict[str, tuple[float, float]] = {}

        self.events: list[Event] = []
        self.heap: list = []
        self.seq = 0
        self.now = 0.0
        self.error: str | None = None
        self.aborted = False

    # ------------------------------------------------------------------ helpers
    def push(self, time, prio, kind, payload):
        heapq.heappush(self.heap, (time, prio, self.seq, kind, payload))
        self.seq += 1

    def log(self, kind, copy=None, vm=None, detail=""):
        self.events.append(Event(self.now, kind, copy, vm, detail))

    def runtime(self, c: CopyState, vm: str | None = None) -> float:
        return self.wf.by_id[c.origin].runtimes[self.vmi[vm or c.vm]]

    def alive(self, c: CopyState) -> bool:
        return c.status in (PENDING, WAITING, RUNNING)

    def others_alive(self, c: CopyState) -> bool:
        return any(o is not c and self.alive(o) for o in self.by_task[c.origin])

    def data_ready(self, task: str, vm: str) -> float:
        ready = 0.0
        for d in self.wf.parents[task]:
            st = self.store[d.parent]
            t = self.task_done[d.parent] + self.pool.transfer_time(d.data, st.vm, vm)
            if t > ready:
                ready = t
        return ready

    def parents_done(self, task: str) -> bool:
        return all(d.parent in self.task_done for d in self.wf.parents[task])

    def vm_free_estimate(self, vm: str) -> float:
        t = self.running_until[vm] if self.running[vm] is not None else self.now
        for _, _, _, c in self.queue[vm]:
            if c.status == WAITING:
                t += busy_duration(self.runtime(c, vm), c.work, self.cp)
        return max(t, self.now)

    def best_nonfailing(self, c: CopyState) -> tuple[str, float] | None:
        best = None
        for vm in self.nonfailing:
            if vm == c.vm:
                continue
            est = max(self.now, self.data_ready(c.origin, vm), self.vm_free_estimate(vm))
            if best is None or est < best[1]:
                best = (vm, est)
        return best

    # ------------------------------------------------------------------ lifecycle
    def schedule_ready(self, c: CopyState):
        t = max(c.est, self.data_ready(c.origin, c.vm))
        self.push(t, _READY, "ready", c)

    def request_vm(self, c: CopyState):
        vm = c.vm
        win = self.trace.containing(vm, self.now)
        if win is not None:
            if c.resubmitted:
                self.enqueue(c, "down")
            else:
                self.fail(c, win, "down_at_start")
            return
        if self.running[vm] is not None or self.queue[vm]:
            if c.resubmitted or not self.busy_as_failure or not self.others_alive(c):
                self.enqueue(c, "busy")
            else:
                c.status = TERMINATED
                self.failures[c.origin] += 1
                self.log("terminate_replica", c.copy, vm, "busy")
            return
        self.start(c)

    def enqueue(self, c: CopyState, why: str):
        c.status = WAITING
        heapq.heappush(self.queue[c.vm], (self.now, c.origin, c.ordinal, c))
        self.log("wait_busy", c.copy, c.vm, why)

    def dispatch(self, vm: str):
        if self.running[vm] is not None or self.trace.containing(vm, self.now) is not None:
            return
        q = self.queue[vm]
        while q:
            _, _, _, c = heapq.heappop(q)
            if c.status == WAITING:
                self.start(c)
                return

    def start(self, c: CopyState):
        vm = c.vm
        r = self.runtime(c)
        c.status = RUNNING
        if c.ast is None:
            c.ast = self.now
        self.running[vm] = c
        self.seg_start[c.copy] = (self.now, c.work)
        finish = self.now + busy_duration(r, c.work, self.cp)
        nxt = self.trace.next_from(vm, self.now)
        self.log("start", c.copy, vm, f"work={c.work:g}")
        if nxt is None or finish <= nxt[0]:
            self.running_until[vm] = finish
            self.push(finish, _COMPLETE, "complete", c)
        else:
            self.running_until[vm] = nxt[0]
            self.push(nxt[0], _FAIL, "fail", (c, nxt))

    def close_segment(self, c: CopyState, outcome: str) -> Segment:
        t0, w0 = self.seg_start.pop(c.copy)
        r = self.runtime(c)
        if outcome == "done":
            # closed form, immune to clock rounding
            work, last_ck, in_write = r, 0.0, False
            ck = n_checkpoints(r, self.cp.lam) - n_checkpoints(w0, self.cp.lam)
        else:
            work, ck, last_ck, in_write = _progress(w0, r, self.cp.lam, self.cp.gamma, self.now - t0)
        seg = Segment(c.vm, t0, self.now, w0, work, ck, ck * self.cp.gamma, outcome,
                      partial_write=in_write)
        base = n_checkpoints(w0, self.cp.lam)
        for k in range(ck):
            # checkpoint k+1 of this segment completes after its work and write time
            w = (base + k + 1) * self.cp.lam
            t = t0 + (w - w0) + (k + 1) * self.cp.gamma
            self.events.append(Event(t, "checkpoint", c.copy, c.vm, f"alpha={base + k + 1}"))
        if outcome != "done":
            seg.lost = (self.now - t0) - last_ck
            c.alpha = base + ck
            c.work = min(c.alpha * self.cp.lam, r)
        c.segments.append(seg)
        return seg

    def on_complete(self, c: CopyState):
        vm = c.vm
        self.close_segment(c, "done")
        c.status = DONE
        c.aft = self.now
        self.running[vm] = None
        self.log("complete", c.copy, vm)
        t = c.origin
        if t not in self.task_done:
            self.task_done[t] = self.now
            self.winners[t] = c.copy
            self.store[t] = StoreEntry(vm, f"{vm}:{t}", vm in self.fvm)
            for o in self.by_task[t]:
                if o.status in (PENDING, WAITING):
                    o.status = TERMINATED
                    self.log("terminate_replica", o.copy, o.vm, "sibling_done")
            for d in self.wf.children[t]:
                child = d.child
                if self.parents_done(child) and child not in self.task_done:
                    for o in self.by_task[child]:
                        if o.status == PENDING and not o.resubmitted:
                            self.schedule_ready(o)
        self.dispatch(vm)

    def on_fail(self, c: CopyState, win):
        vm = c.vm
        self.close_segment(c, "failed")
        self.running[vm] = None
        self.fail(c, win, "vm_down")

    def fail(self, c: CopyState, win, why: str):
        c.status = FAILED
        t = c.origin
        self.failures[t] += 1
        self.log("copy_failed", c.copy, c.vm, why)
        if t in self.task_done or self.others_alive(c):
            return
        if not self.resubmit:
            self.abort(f"task {t} failed with no copies left")
            return
        r = self.runtime(c)
        best = self.best_nonfailing(c)
        if c.resubmitted:
            # second failure after a stay decision: go to a non-failing VM if one exists
            dec = Move(*best) if best is not None else Stay(win[1], r - c.work)
        else:
            dec = decide_resubmission(c.alpha, self.cp.lam, r, win[1], best)
        c.resubmitted = True
        if isinstance(dec, Move):
            self.log("resubmit", c.copy, dec.vm, f"move est={dec.est:g} from={c.vm}")
            c.vm = dec.vm
            c.work = 0.0
            c.alpha = 0
            c.status = PENDING
            self.push(max(self.now, self.data_ready(t, dec.vm)), _READY, "ready", c)
        else:
            self.log("resubmit", c.copy, c.vm, f"stay until={dec.until:g}")
            c.status = PENDING
            self.enqueue(c, "down")

    def abort(self, msg: str):
        self.error = "workflow incomplete"
        self.log("copy_failed", None, None, msg)
        for c in self.copies.values():
            if c.status == RUNNING:
                self.close_segment(c, "aborted")
                c.status = TERMINATED
        self.aborted = True

    # ------------------------------------------------------------------ main loop
    def run(self) -> ExecutionLog:
        for vm in self.pool.vms:
            for x, y in self.trace.downtimes.get(vm, ()):
                self.push(x, _VM_DOWN, "vm_down", vm)
                self.push(y, _VM_UP, "vm_up", vm)
        for t in self.wf.entry_tasks:
            for c in self.by_task[t]:
                self.schedule_ready(c)

        n_tasks = len(self.wf.ids)
        while self.heap and not self.aborted:
            time, _, _, kind, payload = heapq.heappop(self.heap)
            if len(self.task_done) == n_tasks and not any(self.running.values()):
                break
            if time > self.horizon and len(self.task_done) < n_tasks:
                self.now = self.horizon
                self.abort("horizon reached")
                break
            self.now = time
            if kind == "complete":
                self.on_complete(payload)
            elif kind == "fail":
                self.on_fail(*payload)
            elif kind == "vm_up":
                self.log("vm_up", None, payload)
                self.dispatch(payload)
            elif kind == "vm_down":
                self.log("vm_down", None, payload)
            elif kind == "ready":
                if payload.status == PENDING:
                    self.request_vm(payload)

        completed = len(self.task_done) == n_tasks
        if not completed:
            self.error = "workflow incomplete"
        finish = max(self.task_done.values(), default=0.0) if completed else None
        self.events.sort(key=lambda e: e.time)
        return ExecutionLog(self.events, self.copies, self.failures, self.store, self.task_done,
                            self.winners, completed, finish if completed else None, self.horizon, self.error)


def check_consistency(s: Schedule, trace: FailureTrace, spec: WorkflowSpec) -> None:
    pool = spec.pool
    ids = set(spec.workflow.ids)
    for a in s.assignments.values():
        if a.origin not in ids:
            raise SimulationError(f"schedule copy {a.copy} refers to unknown task {a.origin}")
        if a.vm not in pool.index:
            raise SimulationError(f"schedule copy {a.copy} on unknown VM {a.vm}")
    if s.assignments and max(a.eft for a in s.assignments.values()) > trace.horizon:
        raise SimulationError("schedule extends beyond the trace horizon")
    missing = ids - {a.origin for a in s.assignments.values()}
    if missing:
        raise SimulationError(f"schedule misses tasks {sorted(missing)[:5]}")
    if set(trace.vms) != set(pool.vms):
        raise SimulationError("trace VM set differs from the resource pool")
    bad = trace.fvm & pool.reliable
    if bad:
        raise SimulationError(f"reliable VMs in failure trace: {sorted(bad)}")
    for vm, iv in trace.downtimes.items():
        for (x, y), nxt in zip(iv, iv[1:] + ((math.inf, math.inf),)):
            if not (0 <= x < y <= nxt[0]):
                raise SimulationError(f"downtimes of {vm} are not sorted and disjoint")


def simulate(s: Schedule, trace: FailureTrace, cp: CheckpointConfig, spec: WorkflowSpec, *,
             busy_as_failure: bool = True, resubmit: bool = True) -> ExecutionLog:
    """Replay ``s`` against ``trace``.

    ``resubmit=False`` models plain HEFT / ReplicateAll: a task whose copies
    have all failed ends the run as incomplete.
    """
    check_consistency(s, trace, spec)
    return _Engine(s, trace, cp, spec, busy_as_failure, resubmit).run()


def iter_segments(log: ExecutionLog) -> Iterable[tuple[CopyState, Segment]]:
    for c in log.copies.values():
        for seg in c.segments:
            yield c, seg

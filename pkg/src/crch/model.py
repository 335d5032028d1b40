"""Immutable workflow / resource data model and averaged-cost accessors.

Durations are minutes, data volumes are opaque "data units" and transfer
rates are data units per minute. Task and VM ids are opaque strings.
"""
from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Task:
    id: str
    runtimes: tuple[float, ...]
    priority: int = 0

    def __post_init__(self):
        object.__setattr__(self, "runtimes", tuple(float(r) for r in self.runtimes))


@dataclass(frozen=True)
class Dependency:
    parent: str
    child: str
    data: float = 0.0


@dataclass(frozen=True)
class Workflow:
    tasks: tuple[Task, ...]
    deps: tuple[Dependency, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "deps", tuple(self.deps))

    @cached_property
    def by_id(self) -> dict[str, Task]:
        return {t.id: t for t in self.tasks}

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tasks)

    @cached_property
    def parents(self) -> dict[str, tuple[Dependency, ...]]:
        out: dict[str, list[Dependency]] = {t.id: [] for t in self.tasks}
        for d in self.deps:
            out.setdefault(d.child, []).append(d)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def children(self) -> dict[str, tuple[Dependency, ...]]:
        out: dict[str, list[Dependency]] = {t.id: [] for t in self.tasks}
        for d in self.deps:
            out.setdefault(d.parent, []).append(d)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def entry_tasks(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tasks if not self.parents[t.id])

    @cached_property
    def exit_tasks(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tasks if not self.children[t.id])

    def topological_order(self) -> list[str]:
        """Parents before children; ties resolved by task id."""
        ts = graphlib.TopologicalSorter({t.id: () for t in self.tasks})
        for d in self.deps:
            ts.add(d.child, d.parent)
        ts.prepare()
        order = []
        while ts.is_active():
            ready = sorted(ts.get_ready())
            order.extend(ready)
            ts.done(*ready)
        return order


@dataclass(frozen=True)
class ResourcePool:
    vms: tuple[str, ...]
    rates: tuple[tuple[float, ...], ...]
    reliable: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "vms", tuple(self.vms))
        object.__setattr__(
            self, "rates", tuple(tuple(float(x) for x in row) for row in self.rates)
        )
        object.__setattr__(self, "reliable", frozenset(self.reliable))

    @cached_property
    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.vms)}

    @property
    def unreliable(self) -> tuple[str, ...]:
        return tuple(v for v in self.vms if v not in self.reliable)

    def rate(self, a: str, b: str) -> float:
        return self.rates[self.index[a]][self.index[b]]

    def transfer_time(self, data: float, a: str, b: str) -> float:
        if a == b or data == 0:
            return 0.0
        return data / self.rates[self.index[a]][self.index[b]]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[tuple[str, str], ...] = ()

    def errors(self) -> list[str]:
        return [msg for sev, msg in self.issues if sev == ERROR]

    def __str__(self):
        if not self.issues:
            return "ok"
        return "; ".join(f"{sev}: {msg}" for sev, msg in self.issues)


class ValidationError(ValueError):
    def __init__(self, report: ValidationReport):
        super().__init__(str(report))
        self.report = report


def validate(workflow: Workflow, pool: ResourcePool) -> ValidationReport:
    """Report every structural problem of ``(workflow, pool)``; never raises."""
    issues: list[tuple[str, str]] = []

    def err(msg):
        issues.append((ERROR, msg))

    n_vm = len(pool.vms)
    if n_vm == 0:
        err("resource pool has no VMs")
    if len(set(pool.vms)) != n_vm:
        err("duplicate VM ids")
    if len(pool.rates) != n_vm or any(len(row) != n_vm for row in pool.rates):
        err(f"rates matrix must be {n_vm}x{n_vm}")
    else:
        for i, row in enumerate(pool.rates):
            for j, r in enumerate(row):
                if i != j and not r > 0:
                    err(f"nonpositive transfer rate {pool.vms[i]}->{pool.vms[j]}: {r}")
    if not pool.reliable:
        err("no reliable VM")
    stray = sorted(pool.reliable - set(pool.vms))
    if stray:
        err(f"reliable VMs not in pool: {', '.join(stray)}")

    if not workflow.tasks:
        err("no entry task")
        return ValidationReport(False, tuple(issues))

    seen: set[str] = set()
    for t in workflow.tasks:
        if t.id in seen:
            err(f"duplicate task id {t.id}")
        seen.add(t.id)
        if len(t.runtimes) != n_vm:
            err(f"task {t.id}: {len(t.runtimes)} runtimes for {n_vm} VMs")
        if any(not r > 0 for r in t.runtimes):
            err(f"task {t.id}: nonpositive runtime")

    dangling = False
    for d in workflow.deps:
        for end in (d.parent, d.child):
            if end not in seen:
                err(f"dependency {d.parent}->{d.child}: unknown task {end}")
                dangling = True
        if d.parent == d.child:
            err(f"self dependency on {d.parent}")
        if d.data < 0:
            err(f"dependency {d.parent}->{d.child}: negative data")

    if not dangling:
        try:
            workflow.topological_order()
        except graphlib.CycleError as exc:
            err(f"cycle: {' -> '.join(exc.args[1])}")
        else:
            if not workflow.entry_tasks:
                err("no entry task")
            if not workflow.exit_tasks:
                err("no exit task")

    ok = not any(sev == ERROR for sev, _ in issues)
    return ValidationReport(ok, tuple(issues))


def mean_runtime(task: Task) -> float:
    """Average execution time over all VMs."""
    return sum(task.runtimes) / len(task.runtimes)


def mean_transfer(dep: Dependency, pool: ResourcePool) -> float:
    """Average transfer time of ``dep.data`` over ordered distinct VM pairs.

    Same-VM pairs are excluded; a single-VM pool has no transfers at all.
    """
    n = len(pool.vms)
    if dep.data == 0 or n < 2:
        return 0.0
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += dep.data / pool.rates[i][j]
    return total / (n * (n - 1))


def make_pool(
    vms: Sequence[str], rates: Iterable[Iterable[float]] | float = 1.0, reliable=None
) -> ResourcePool:
    """Convenience constructor; a scalar rate builds a uniform full mesh."""
    vms = tuple(vms)
    if isinstance(rates, (int, float)):
        rates = [[0.0 if i == j else float(rates) for j in range(len(vms))] for i in range(len(vms))]
    if reliable is None:
        reliable = vms[:1]
    return ResourcePool(vms, tuple(tuple(r) for r in rates), frozenset(reliable))

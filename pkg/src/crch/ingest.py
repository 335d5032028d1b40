"""Workflow ingestion: native JSON documents, a DAX XML subset, and synthetic generators."""
from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .model import Dependency, ResourcePool, Task, ValidationError, Workflow, validate

log = logging.getLogger(__name__)

FAMILIES = ("layered-random", "montage-like", "cybershake-like", "ligo-like", "sipht-like")


class IngestError(ValueError):
    pass


class SchemaError(IngestError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


class DaxParseError(IngestError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


@dataclass(frozen=True)
class WorkflowSpec:
    workflow: Workflow
    pool: ResourcePool
    name: str = "workflow"
    family: str = "custom"
    size: int = field(default=-1)

    def __post_init__(self):
        if self.size < 0:
            object.__setattr__(self, "size", len(self.workflow.tasks))


def _checked(spec: WorkflowSpec) -> WorkflowSpec:
    report = validate(spec.workflow, spec.pool)
    if not report.ok:
        raise ValidationError(report)
    return spec


# --------------------------------------------------------------------------- native


def _require(obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}.{key}" if where else key, "missing")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise SchemaError(f"{where}.{key}" if where else key, f"expected {kind}")
    return val


def _number(val, key):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(key, f"expected a number, got {val!r}")
    return float(val)


def parse_native(data: bytes | str) -> WorkflowSpec:
    """Parse the native JSON document (tasks / deps / vms / rates)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError("<document>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("<document>", "expected an object")

    vms_raw = _require(doc, "vms", "", list)
    vms, reliable = [], []
    for i, v in enumerate(vms_raw):
        vid = str(_require(v, "id", f"vms[{i}]"))
        vms.append(vid)
        rel = v.get("reliable", False)
        if not isinstance(rel, bool):
            raise SchemaError(f"vms[{i}].reliable", "expected a boolean")
        if rel:
            reliable.append(vid)

    n = len(vms)
    rates_raw = _require(doc, "rates", "", list)
    if len(rates_raw) != n:
        raise SchemaError("rates", f"expected {n} rows, got {len(rates_raw)}")
    rates = []
    for i, row in enumerate(rates_raw):
        if not isinstance(row, list) or len(row) != n:
            raise SchemaError(f"rates[{i}]", f"expected {n} values")
        rates.append(tuple(_number(x, f"rates[{i}]") for x in row))

    tasks = []
    for i, t in enumerate(_require(doc, "tasks", "", list)):
        tid = str(_require(t, "id", f"tasks[{i}]"))
        rts = _require(t, "runtimes", f"tasks[{i}]", list)
        if len(rts) != n:
            raise SchemaError(f"tasks[{i}].runtimes", f"expected {n} values, got {len(rts)}")
        prio = t.get("priority", 0)
        if isinstance(prio, bool) or not isinstance(prio, int):
            raise SchemaError(f"tasks[{i}].priority", "expected an integer")
        tasks.append(Task(tid, tuple(_number(r, f"tasks[{i}].runtimes") for r in rts), prio))

    deps = []
    for i, d in enumerate(doc.get("deps", [])):
        deps.append(
            Dependency(
                str(_require(d, "parent", f"deps[{i}]")),
                str(_require(d, "child", f"deps[{i}]")),
                _number(d.get("data", 0.0), f"deps[{i}].data"),
            )
        )

    spec = WorkflowSpec(
        Workflow(tuple(tasks), tuple(deps)),
        ResourcePool(tuple(vms), tuple(rates), frozenset(reliable)),
        name=str(doc.get("name", "workflow")),
        family=str(doc.get("family", "custom")),
    )
    return _checked(spec)


def emit_native(spec: WorkflowSpec) -> bytes:
    """Serialize to the canonical native document (inverse of :func:`parse_native`)."""
    doc = {
        "name": spec.name,
        "family": spec.family,
        "tasks": [
            {"id": t.id, "priority": t.priority, "runtimes": list(t.runtimes)}
            for t in spec.workflow.tasks
        ],
        "deps": [
            {"parent": d.parent, "child": d.child, "data": float(d.data)}
            for d in spec.workflow.deps
        ],
        "vms": [{"id": v, "reliable": v in spec.pool.reliable} for v in spec.pool.vms],
        "rates": [list(row) for row in spec.pool.rates],
    }
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


# --------------------------------------------------------------------------- DAX


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def default_resources(vm_count: int = 4, seed: int = 0, reliable: int | None = None) -> dict:
    """Sidecar used when a DAX comes without one: per-VM speed factors in [0.5, 1.5)."""
    rng = np.random.default_rng(seed)
    speeds = rng.uniform(0.5, 1.5, size=vm_count)
    if reliable is None:
        reliable = max(1, vm_count // 5)
    vms = [
        {"id": f"v{i + 1}", "speed": float(speeds[i]), "reliable": i < reliable}
        for i in range(vm_count)
    ]
    rates = [[0.0 if i == j else 1.0 for j in range(vm_count)] for i in range(vm_count)]
    return {"vms": vms, "rates": rates}


def parse_dax(data: bytes | str, resources: dict | None = None, *, seed: int = 0,
              vm_count: int = 4, name: str = "dax") -> WorkflowSpec:
    """Parse a DAX subset: ``job``, ``uses``, ``child``/``parent``.

    Each job's single runtime is multiplied by per-VM speed factors from
    ``resources`` (``{"vms": [{"id", "speed", "reliable"}], "rates": [[...]]}``).
    Edge data = total size of files the parent writes and the child reads.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise DaxParseError(f"malformed XML: {exc}", exc.position[0]) from exc

    if resources is None:
        resources = default_resources(vm_count, seed)
    vm_entries = resources["vms"]
    vms = tuple(str(v["id"]) for v in vm_entries)
    speeds = [float(v.get("speed", 1.0)) for v in vm_entries]
    reliable = frozenset(str(v["id"]) for v in vm_entries if v.get("reliable"))
    pool = ResourcePool(vms, tuple(tuple(r) for r in resources["rates"]), reliable)

    jobs: dict[str, float] = {}
    order: list[str] = []
    outputs: dict[str, dict[str, float]] = defaultdict(dict)
    inputs: dict[str, dict[str, float]] = defaultdict(dict)
    edges: list[tuple[str, str]] = []
    warned: set[str] = set()

    def warn(tag):
        if tag not in warned:
            warned.add(tag)
            log.warning("DAX: ignoring <%s> elements", tag)

    for el in root:
        tag = _local(el.tag)
        if tag == "job":
            jid = el.get("id")
            if jid is None:
                raise DaxParseError("job without id")
            try:
                jobs[jid] = float(el.get("runtime", "1"))
            except ValueError as exc:
                raise DaxParseError(f"job {jid}: bad runtime {el.get('runtime')!r}") from exc
            order.append(jid)
            for sub in el:
                stag = _local(sub.tag)
                if stag != "uses":
                    warn(stag)
                    continue
                fname = sub.get("file") or sub.get("name")
                size = float(sub.get("size", "0"))
                link = (sub.get("link") or "").lower()
                if link == "output":
                    outputs[jid][fname] = size
                elif link == "input":
                    inputs[jid][fname] = size
                else:
                    outputs[jid][fname] = size
                    inputs[jid][fname] = size
        elif tag == "child":
            cid = el.get("ref")
            for p in el:
                if _local(p.tag) != "parent":
                    warn(_local(p.tag))
                    continue
                edges.append((p.get("ref"), cid))
        else:
            warn(tag)

    for p, c in edges:
        for end in (p, c):
            if end not in jobs:
                raise IngestError(f"reference to undeclared job {end!r}")

    tasks = tuple(Task(j, tuple(jobs[j] * s for s in speeds)) for j in order)
    deps = []
    for p, c in edges:
        shared = set(outputs[p]) & set(inputs[c])
        deps.append(Dependency(p, c, float(sum(outputs[p][f] for f in sorted(shared)))))
    spec = WorkflowSpec(Workflow(tasks, tuple(deps)), pool, name=name, family="dax")
    return _checked(spec)


# --------------------------------------------------------------------------- generators


@dataclass(frozen=True)
class GeneratorConfig:
    family: str = "layered-random"
    size: int = 100
    vm_count: int = 20
    reliable: int = 4
    seed: int = 0
    runtime_range: tuple[float, float] = (1.0, 10.0)
    data_range: tuple[float, float] = (1.0, 10.0)
    rate_range: tuple[float, float] = (1.0, 5.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        if self.size < 1 or self.vm_count < 1:
            raise ValueError("size and vm_count must be >= 1")
        if not 1 <= self.reliable <= self.vm_count:
            raise ValueError("reliable must be in [1, vm_count]")


def _split(total: int, parts: int, rng) -> list[int]:
    """Random composition of ``total`` into ``parts`` positive integers."""
    if parts >= total:
        return [1] * total
    cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False))
    bounds = np.concatenate(([0], cuts, [total]))
    return [int(b - a) for a, b in zip(bounds[:-1], bounds[1:])]


def _layered_edges(widths, rng):
    layers, edges, k = [], [], 0
    for w in widths:
        layers.append(list(range(k, k + w)))
        k += w
    for li in range(1, len(layers)):
        prev = layers[li - 1]
        for t in layers[li]:
            n_par = int(rng.integers(1, min(3, len(prev)) + 1))
            for p in rng.choice(prev, size=n_par, replace=False):
                edges.append((int(p), t))
            if li >= 2 and rng.random() < 0.2:
                older = layers[int(rng.integers(0, li - 1))]
                edges.append((int(rng.choice(older)), t))
    return edges


def _montage(size, rng):
    # project (wide) -> diff (pairwise) -> fit (fan-in) -> background (wide) -> add chain
    tail = 3
    a = max(2, (size - tail) // 3 + 1)
    b = a - 1
    c = size - a - b - 1 - tail
    if c < 1:
        return None
    proj = list(range(0, a))
    diff = list(range(a, a + b))
    fit = a + b
    bg = list(range(fit + 1, fit + 1 + c))
    rest = list(range(fit + 1 + c, size))
    edges = []
    for i, d in enumerate(diff):
        edges += [(proj[i], d), (proj[i + 1], d)]
    edges += [(d, fit) for d in diff]
    for i, g in enumerate(bg):
        edges += [(fit, g), (proj[i % a], g)]
    edges += [(g, rest[0]) for g in bg]
    edges += [(rest[i], rest[i + 1]) for i in range(len(rest) - 1)]
    return edges


def _sipht(size, rng):
    # many independent chains that only meet near the end
    merge = 2
    body = size - merge
    if body < 2:
        return None
    chains = max(1, body // 4)
    lengths = _split(body, chains, rng)
    edges, k, tails = [], 0, []
    for ln in lengths:
        edges += [(k + i, k + i + 1) for i in range(ln - 1)]
        tails.append(k + ln - 1)
        k += ln
    edges += [(t, k) for t in tails]
    edges.append((k, k + 1))
    return edges


def _cybershake(size, rng):
    # few roots fanning out to extraction/seismogram pairs, zipped at the end
    roots = max(1, size // 25)
    zips = 2
    mid = size - roots - zips
    if mid < 2:
        return None
    seis = mid // 2
    peak = mid - seis
    edges = []
    s0 = roots
    p0 = roots + seis
    z0 = roots + seis + peak
    for i in range(seis):
        edges.append((i % roots, s0 + i))
    for i in range(peak):
        edges.append((s0 + (i % seis), p0 + i))
    edges += [(s0 + i, z0) for i in range(seis)]
    edges += [(p0 + i, z0 + 1) for i in range(peak)]
    return edges


def _ligo(size, rng):
    # groups of tmpltbank -> inspiral -> thinca, then a second inspiral pass
    per = 4
    groups = max(1, size // (per * 2))
    widths = []
    remaining = size
    while remaining > 0:
        w = min(remaining, groups)
        widths.append(w)
        remaining -= w
    return _layered_edges(widths, rng)


def generate(config: GeneratorConfig) -> WorkflowSpec:
    """Deterministic synthetic workflow + resource pool for ``config``."""
    rng = np.random.default_rng(config.seed)
    size = config.size
    edges = None
    if size >= 6:
        if config.family == "montage-like":
            edges = _montage(size, rng)
        elif config.family == "sipht-like":
            edges = _sipht(size, rng)
        elif config.family == "cybershake-like":
            edges = _cybershake(size, rng)
        elif config.family == "ligo-like":
            edges = _ligo(size, rng)
    if edges is None:
        if size == 1:
            edges = []
        else:
            n_layers = max(2, min(size, int(round(np.sqrt(size)))))
            edges = _layered_edges(_split(size, n_layers, rng), rng)

    runtime_scale = 4.0 if config.family == "ligo-like" else 1.0
    data_scale = 4.0 if config.family == "cybershake-like" else 1.0

    m = config.vm_count
    speed = rng.uniform(0.5, 1.5, size=m)
    base = rng.uniform(*config.runtime_range, size=size) * runtime_scale
    jitter = rng.uniform(0.8, 1.2, size=(size, m))
    runtimes = np.round(base[:, None] * speed[None, :] * jitter, 6)
    priority = rng.integers(0, 3, size=size)

    width = len(str(size))
    tid = [f"t{i + 1:0{width}d}" for i in range(size)]
    tasks = tuple(
        Task(tid[i], tuple(float(x) for x in runtimes[i]), int(priority[i])) for i in range(size)
    )
    seen = set()
    deps = []
    for p, c in edges:
        if (p, c) in seen:
            continue
        seen.add((p, c))
        vol = float(np.round(rng.uniform(*config.data_range) * data_scale, 6))
        deps.append(Dependency(tid[p], tid[c], vol))

    r = np.round(rng.uniform(*config.rate_range, size=(m, m)), 6)
    r = np.triu(r, 1)
    r = r + r.T
    vms = tuple(f"v{i + 1:02d}" for i in range(m))
    pool = ResourcePool(
        vms, tuple(tuple(float(x) for x in row) for row in r), frozenset(vms[: config.reliable])
    )
    spec = WorkflowSpec(
        Workflow(tasks, tuple(deps)), pool,
        name=f"{config.family}-{size}-s{config.seed}", family=config.family, size=size,
    )
    return _checked(spec)


def load_workflow(path: str, *, resources: str | None = None, seed: int = 0,
                  vm_count: int = 4) -> WorkflowSpec:
    """Dispatch on extension: ``.xml``/``.dax`` -> DAX, anything else -> native."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith((".xml", ".dax")):
        res = None
        if resources:
            with open(resources, "rb") as fh:
                res = json.load(fh)
        stem = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        return parse_dax(raw, res, seed=seed, vm_count=vm_count, name=stem)
    return parse_native(raw)

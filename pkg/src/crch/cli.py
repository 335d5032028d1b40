"""Experiment harness: ``crch run | compare | sweep | generate``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .clusterrep import ClusterParams, ReplicationPlan, replication_plan
from .faults import PROFILES, build_trace, profile
from .ingest import FAMILIES, GeneratorConfig, IngestError, WorkflowSpec, emit_native, generate, load_workflow
from .metrics import NUMERIC, RunMetrics, aggregate, argmin_lambda, compute, default_horizon, lambda_sweep
from .model import ValidationError
from .scheduler import Schedule, overprovision
from .simruntime import CheckpointConfig, auto_lambda, simulate

log = logging.getLogger("crch")

COLUMNS = ("workflow", "family", "size", "algorithm", "environment", "seed", "tet", "usage",
           "wastage", "slr", "completed", "resubmissions", "agg")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Algorithm:
    name: str  # heft | crch | replicate-all
    k: int = 0

    @property
    def label(self) -> str:
        return f"replicate-all:{self.k}" if self.name == "replicate-all" else self.name


def parse_algorithms(text: str) -> list[Algorithm]:
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        name, _, arg = tok.partition(":")
        name = name.lower()
        if name in ("heft", "crch") and not arg:
            out.append(Algorithm(name))
        elif name == "replicate-all":
            try:
                k = int(arg or 3)
            except ValueError:
                raise ConfigError(f"bad replica count in {tok!r}") from None
            if k < 1:
                raise ConfigError("replicate-all needs k >= 1")
            out.append(Algorithm(name, k))
        else:
            raise ConfigError(f"unknown algorithm {tok!r}")
    if not out:
        raise ConfigError("no algorithm given")
    return out


def parse_family(text: str) -> GeneratorConfig:
    fam, sep, size = text.partition(":")
    if not sep:
        raise ConfigError("--generate expects FAMILY:SIZE")
    fam = fam.lower()
    if fam not in FAMILIES and f"{fam}-like" in FAMILIES:
        fam = f"{fam}-like"
    if fam in ("layered", "random"):
        fam = "layered-random"
    if fam not in FAMILIES:
        raise ConfigError(f"unknown family {fam!r}; choose from {', '.join(FAMILIES)}")
    try:
        n = int(size)
    except ValueError:
        raise ConfigError(f"bad size {size!r}") from None
    return GeneratorConfig(family=fam, size=n)


def base_seed(args) -> int:
    env = os.environ.get("CRCH_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"CRCH_SEED is not an integer: {env!r}") from None
    return args.seed


def load_spec(args, seed: int) -> WorkflowSpec:
    if args.generate:
        cfg = parse_family(args.generate)
        reliable = args.reliable if args.reliable is not None else min(4, args.vms)
        try:
            cfg = replace(cfg, vm_count=args.vms, reliable=reliable, seed=seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return generate(cfg)
    spec = load_workflow(args.workflow, resources=getattr(args, "resources", None), seed=seed,
                         vm_count=args.vms)
    if args.reliable is not None:
        if not 0 <= args.reliable <= len(spec.pool.vms):
            raise ConfigError("--reliable exceeds the VM count")
        pool = replace(spec.pool, reliable=frozenset(spec.pool.vms[: args.reliable]))
        spec = replace(spec, pool=pool)
    return spec


def build_plan(alg: Algorithm, spec: WorkflowSpec, params: ClusterParams) -> ReplicationPlan:
    ids = spec.workflow.ids
    if alg.name == "heft":
        return ReplicationPlan.uniform(ids, 1)
    if alg.name == "replicate-all":
        return ReplicationPlan.uniform(ids, alg.k + 1)
    return replication_plan(spec, params)[0]


def checkpoint_for(args, env: str) -> CheckpointConfig:
    if str(args.lam).lower() == "auto":
        return CheckpointConfig(auto_lambda(profile(env), args.gamma), args.gamma, "auto")
    try:
        lam = float(args.lam)
    except ValueError:
        raise ConfigError(f"--lambda must be a number or 'auto', got {args.lam!r}") from None
    return CheckpointConfig(lam, args.gamma)


def _one_run(job):
    spec, s, alg, env, seed, horizon, cp, resubmit = job
    p = profile(env)
    trace = build_trace(p, spec.pool, horizon, seed)
    lg = simulate(s, trace, cp, spec, busy_as_failure=p.busy_as_failure, resubmit=resubmit)
    return compute(lg, s, spec), lg.to_ndjson()


@dataclass
class Result:
    algorithm: str
    environment: str
    rep: int
    seed: int
    metrics: RunMetrics
    events: str


def execute(args) -> tuple[WorkflowSpec, list[Result]]:
    seed = base_seed(args)
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    algs = parse_algorithms(args.alg)
    envs = [e.strip() for e in args.env.split(",") if e.strip()]
    for e in envs:
        if e not in PROFILES:
            raise ConfigError(f"unknown environment {e!r}; choose from {', '.join(PROFILES)}")
    spec = load_spec(args, seed)
    params = ClusterParams(cov_threshold=args.cov, target_k=args.max_rep, R=args.triplet_r,
                           margin=args.margin)
    schedules: dict[str, Schedule] = {a.label: overprovision(spec, build_plan(a, spec, params))
                                      for a in algs}
    horizon = args.horizon or max(default_horizon(spec, s) for s in schedules.values())
    jobs, keys = [], []
    for a in algs:
        for env in envs:
            cp = checkpoint_for(args, env)
            for rep in range(args.reps):
                rs = seed ^ rep
                jobs.append((spec, schedules[a.label], a, env, rs, horizon, cp, a.name == "crch"))
                keys.append((a.label, env, rep, rs))
    if args.jobs and args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            outs = list(ex.map(_one_run, jobs, chunksize=max(1, len(jobs) // (4 * args.jobs))))
    else:
        outs = [_one_run(j) for j in jobs]
    results = [Result(k[0], k[1], k[2], k[3], m, ev) for k, (m, ev) in zip(keys, outs)]
    results.sort(key=lambda r: (r.algorithm, r.environment, r.rep))
    return spec, results


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(round(x, 9))
    return str(x)


def groups(results: list[Result]) -> dict[tuple[str, str], list[Result]]:
    out: dict[tuple[str, str], list[Result]] = {}
    for r in results:
        out.setdefault((r.algorithm, r.environment), []).append(r)
    return out


def runs_csv(spec: WorkflowSpec, results: list[Result], reps: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    head = (spec.name, spec.family, spec.size)
    for r in results:
        m = r.metrics
        w.writerow([*head, r.algorithm, r.environment, r.seed, *(_fmt(v) for v in
                    (m.tet, m.usage, m.wastage, m.slr, m.completed, m.resubmissions)), 0])
    for (alg, env), rs in groups(results).items():
        sm = aggregate([r.metrics for r in rs], reps)
        w.writerow([*head, alg, env, "", *(_fmt(sm.mean[k]) for k in ("tet", "usage", "wastage", "slr")),
                    _fmt(sm.completion_rate), _fmt(sm.mean["resubmissions"]), 1])
    return buf.getvalue()


def summary_doc(spec: WorkflowSpec, results: list[Result], reps: int, seed: int) -> dict:
    cells = []
    for (alg, env), rs in groups(results).items():
        sm = aggregate([r.metrics for r in rs], reps)
        cells.append({"algorithm": alg, "environment": env, **sm.row()})
    return {"workflow": spec.name, "family": spec.family, "size": spec.size, "seed": seed,
            "reps": reps, "cells": cells}


def summary_table(doc: dict) -> str:
    lines = [f"{'algorithm':<18}{'env':<10}{'tet':>10}{'usage':>12}{'wastage':>12}{'slr':>8}{'done':>7}"]
    for c in doc["cells"]:
        lines.append(f"{c['algorithm']:<18}{c['environment']:<10}{c['tet_mean']:>10.2f}"
                     f"{c['usage_mean']:>12.2f}{c['wastage_mean']:>12.2f}{c['slr_mean']:>8.3f}"
                     f"{c['completion_rate']:>7.0%}")
    return "\n".join(lines) + "\n"


def write_outputs(args, spec, results, extra: dict[str, str] | None = None) -> str:
    seed = base_seed(args)
    text = runs_csv(spec, results, args.reps)
    doc = summary_doc(spec, results, args.reps, seed)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "runs.csv"), "w", newline="") as fh:
            fh.write(text)
        with open(os.path.join(args.out, "summary.json"), "w") as fh:
            fh.write(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        for name, body in (extra or {}).items():
            with open(os.path.join(args.out, name), "w", newline="") as fh:
                fh.write(body)
        if args.events:
            ev_dir = os.path.join(args.out, "events")
            os.makedirs(ev_dir, exist_ok=True)
            for r in results:
                fn = f"{r.algorithm.replace(':', '-')}_{r.environment}_{r.rep}.ndjson"
                with open(os.path.join(ev_dir, fn), "w") as fh:
                    fh.write(r.events)
    return text if args.format == "csv" else summary_table(doc)


def compare_csv(results: list[Result], reps: int) -> str:
    g = {k: aggregate([r.metrics for r in rs], reps) for k, rs in groups(results).items()}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("algorithm", "environment", "usage", "wastage", "usage_vs_heft", "wastage_vs_heft",
                "usage_vs_crch", "wastage_vs_crch", "completion_rate"))

    def ratio(a, b):
        return _fmt(a / b) if b else ("1.0" if a == b else "inf")

    for (alg, env), sm in sorted(g.items()):
        row = [alg, env, _fmt(sm.mean["usage"]), _fmt(sm.mean["wastage"])]
        for ref in ("heft", "crch"):
            base = g.get((ref, env))
            if base is None:
                row += ["", ""]
            else:
                row += [ratio(sm.mean["usage"], base.mean["usage"]),
                        ratio(sm.mean["wastage"], base.mean["wastage"])]
        row.append(_fmt(sm.completion_rate))
        w.writerow(row)
    return buf.getvalue()


def cmd_run(args) -> int:
    spec, results = execute(args)
    sys.stdout.write(write_outputs(args, spec, results))
    return 0


def cmd_compare(args) -> int:
    if len(parse_algorithms(args.alg)) < 2:
        raise ConfigError("compare needs at least two algorithms")
    spec, results = execute(args)
    table = compare_csv(results, args.reps)
    write_outputs(args, spec, results, {"compare.csv": table})
    sys.stdout.write(table)
    return 0


def cmd_sweep(args) -> int:
    seed = base_seed(args)
    spec = load_spec(args, seed)
    params = ClusterParams(cov_threshold=args.cov, target_k=args.max_rep, R=args.triplet_r,
                           margin=args.margin)
    alg = parse_algorithms(args.alg)[0]
    plan = build_plan(alg, spec, params)
    try:
        lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --lambdas {args.lambdas!r}") from None
    seeds = [seed ^ i for i in range(args.reps)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("environment", "lambda", "tet", "tet_no_co", "co", "completion_rate", "argmin"))
    for env in [e.strip() for e in args.env.split(",") if e.strip()]:
        curve = lambda_sweep(spec, plan, profile(env), lambdas, args.gamma, seeds,
                             horizon=args.horizon, resubmit=alg.name == "crch")
        best = argmin_lambda(curve)
        for pt in curve:
            w.writerow((env, _fmt(pt.lam), _fmt(pt.tet), _fmt(pt.tet_no_co), _fmt(pt.co),
                        _fmt(pt.completion_rate), _fmt(pt.lam == best)))
    text = buf.getvalue()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_generate(args) -> int:
    cfg = parse_family(args.family)
    reliable = args.reliable if args.reliable is not None else min(4, args.vms)
    try:
        cfg = replace(cfg, vm_count=args.vms, reliable=reliable, seed=base_seed(args))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data = emit_native(generate(cfg))
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.write(data.decode())
    return 0


def _common(p: argparse.ArgumentParser, experiment: bool = True) -> None:
    p.add_argument("--vms", type=int, default=20, help="VM count for generated or DAX workflows")
    p.add_argument("--reliable", type=int, default=None, help="number of never-failing VMs")
    p.add_argument("--seed", type=int, default=0, help="base seed (CRCH_SEED overrides)")
    if not experiment:
        return
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--workflow", help="native JSON or DAX (.xml/.dax) file")
    src.add_argument("--generate", metavar="FAMILY:SIZE")
    p.add_argument("--resources", help="resource JSON for DAX input")
    p.add_argument("--env", default="stable", help="comma-separated environment names")
    p.add_argument("--alg", default="crch", help="comma list of heft, crch, replicate-all:K")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--lambda", dest="lam", default="auto", help="checkpoint interval (minutes) or 'auto'")
    p.add_argument("--gamma", type=float, default=0.05, help="checkpoint overhead (minutes)")
    p.add_argument("--cov", type=float, default=0.3, help="PCA variance coverage threshold")
    p.add_argument("--max-rep", type=int, default=3, help="cluster count / maximum copies per task")
    p.add_argument("--triplet-r", type=int, default=3, help="neighbours in the merge criterion")
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--horizon", type=float, default=None, help="simulation horizon (minutes)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "summary"), default="csv")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
    p.add_argument("--events", action="store_true", help="also dump per-run event logs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crch", description="fault-tolerant workflow scheduling experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate algorithms x environments x replications")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="side-by-side usage/wastage ratios")
    _common(p)
    p.set_defaults(func=cmd_compare, alg="heft,crch,replicate-all:3")

    p = sub.add_parser("sweep", help="mean TET over a grid of checkpoint intervals")
    _common(p)
    p.add_argument("--lambdas", default="0.5,1,2,4,8")
    p.set_defaults(func=cmd_sweep, reps=20)

    p = sub.add_parser("generate", help="write a synthetic workflow as native JSON")
    p.add_argument("family", metavar="FAMILY:SIZE")
    _common(p, experiment=False)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IngestError, ValidationError, OSError, ValueError) as exc:
        print(f"crch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Per-task feature matrix used by the clustering stage."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ingest import WorkflowSpec
from .model import mean_runtime, mean_transfer

FEATURES = ("mean_runtime", "max_parent_transfer", "priority", "n_parents", "n_children")


@dataclass(frozen=True)
class FeatureMatrix:
    task_ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.task_ids), len(self.columns)):
            raise ValueError(f"shape {vals.shape} does not match ids/columns")
        if not np.all(np.isfinite(vals)):
            raise ValueError("feature matrix contains NaN or inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def row(self, task_id: str) -> dict[str, float]:
        i = self.task_ids.index(task_id)
        return dict(zip(self.columns, self.values[i].tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("task",) + self.columns)
            for tid, row in zip(self.task_ids, self.values):
                w.writerow([tid] + [repr(float(x)) for x in row])


def extract(spec: WorkflowSpec) -> FeatureMatrix:
    wf, pool = spec.workflow, spec.pool
    rows = []
    for t in wf.tasks:
        pars = wf.parents[t.id]
        e_t = max((mean_transfer(d, pool) for d in pars), default=0.0)
        rows.append(
            (mean_runtime(t), e_t, float(t.priority), float(len(pars)), float(len(wf.children[t.id])))
        )
    return FeatureMatrix(wf.ids, FEATURES, np.array(rows, dtype=float).reshape(len(rows), len(FEATURES)))


def standardize(m: FeatureMatrix) -> FeatureMatrix:
    """Z-score every column (population std); zero-variance columns become 0."""
    x = m.values
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    out = np.zeros_like(x)
    live = sd > 1e-12
    out[:, live] = (x[:, live] - mu[live]) / sd[live]
    return FeatureMatrix(m.task_ids, m.columns, out)

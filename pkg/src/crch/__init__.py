"""Fault-tolerant workflow scheduling on failure-prone VMs.

Replication counts come from clustering task features, copies are placed by
an over-provisioned HEFT, and a discrete-event engine replays the schedule
against sampled VM downtimes with checkpointing and resubmission.
"""
from ._core import BACKEND
from .clusterrep import ClusterParams, ReplicationPlan, replication_plan
from .faults import FailureTrace, build_trace, profile
from .ingest import GeneratorConfig, WorkflowSpec, generate, load_workflow, parse_dax, parse_native
from .metrics import RunMetrics, aggregate, compute, lambda_sweep
from .scheduler import Schedule, critical_path, heft, overprovision
from .simruntime import CheckpointConfig, auto_lambda, decide_resubmission, simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CheckpointConfig", "ClusterParams", "FailureTrace", "GeneratorConfig",
    "ReplicationPlan", "RunMetrics", "Schedule", "WorkflowSpec", "aggregate", "auto_lambda",
    "build_trace", "compute", "critical_path", "decide_resubmission", "generate", "heft",
    "lambda_sweep", "load_workflow", "overprovision", "parse_dax", "parse_native", "profile",
    "replication_plan", "simulate",
]

"""File formats and orchestration-level metrics.

JSON documents for instances, schedules, models, run logs and reports
(strict schemas: unknown fields are rejected, all documents versioned),
CSV for bulk run records, plus throughput / reliability / cost-change-rate
computation and report aggregation.

Report serialization is canonical: fixed field order and 6-fractional-digit
decimals, so identical inputs yield byte-identical documents.
"""
from __future__ import annotations

import csv
import io as _stdio
import json
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .core import (
    Assignment,
    ConfigOption,
    CostBreakdown,
    DeviceCatalogEntry,
    DurationTable,
    Problem,
    Schedule,
    ValidatedProblem,
    WorkflowSpec,
    evaluate_cost,
    tiered_cost,
    validate_problem,
)
from .predictor import TASK_TYPES, DurationRegressor, FeatureSchema, RunRecord

FORMAT_VERSION = 1

RECORD_FIELDS = (
    "job_id",
    "cpu_cores",
    "memory_gb",
    "parallelism",
    "subtask_count",
    "table_count",
    "code_length",
    "dataset_volume_gb",
    "disk_volume_gb",
    "task_type",
    "observed_duration_s",
)


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


class BadEnum(SchemaError):
    pass


class MetricError(ValueError):
    pass


class ZeroElapsed(MetricError):
    pass


class ZeroTotal(MetricError):
    pass


class Overcount(MetricError):
    pass


class ZeroInitialCost(MetricError):
    pass


def _require(doc: Mapping, path: str, allowed: set[str], required: set[str]) -> None:
    if not isinstance(doc, Mapping):
        raise SchemaError(path, "expected an object")
    for key in doc:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown field")
    for key in required:
        if key not in doc:
            raise SchemaError(f"{path}.{key}", "missing field")


def _number(doc: Mapping, path: str, key: str) -> float:
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}.{key}", "expected a number")
    return float(v)


def _string(doc: Mapping, path: str, key: str) -> str:
    v = doc[key]
    if not isinstance(v, str):
        raise SchemaError(f"{path}.{key}", "expected a string")
    return v


def _loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno}: {e.msg}") from None


def _check_version(doc: Mapping, path: str) -> None:
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"{path}.format_version", f"expected {FORMAT_VERSION}")


def load_problem(
    text: str, validate: bool = True, require_durations: bool = True
) -> Problem:
    """Parse a problem document. Validation errors from the domain layer
    propagate as ValidationErrors; ``require_durations=False`` accepts a
    skeleton whose duration table will come from a model."""
    doc = _loads(text)
    _require(
        doc,
        "$",
        {"format_version", "workflows", "devices", "configs", "durations"},
        {"format_version", "workflows", "devices", "configs"},
    )
    _check_version(doc, "$")

    workflows = []
    for i, w in enumerate(doc["workflows"]):
        path = f"workflows[{i}]"
        _require(
            w,
            path,
            {"id", "earliest_start", "deadline", "predecessors", "features"},
            {"id", "earliest_start", "deadline"},
        )
        preds = w.get("predecessors", [])
        if not isinstance(preds, list) or not all(isinstance(p, str) for p in preds):
            raise SchemaError(f"{path}.predecessors", "expected a list of strings")
        wid = _string(w, path, "id")
        feats = None
        if "features" in w:
            if not isinstance(w["features"], Mapping):
                raise SchemaError(f"{path}.features", "expected an object")
            feats = dict(w["features"])
        workflows.append(
            WorkflowSpec(
                id=wid,
                earliest_start=_number(w, path, "earliest_start"),
                deadline=_number(w, path, "deadline"),
                predecessors=frozenset(preds),
                features=feats,
            )
        )

    devices = []
    for i, d in enumerate(doc["devices"]):
        path = f"devices[{i}]"
        _require(
            d,
            path,
            {"id", "base_rate", "overflow_rate", "prepurchased_hours"},
            {"id", "base_rate", "overflow_rate", "prepurchased_hours"},
        )
        devices.append(
            DeviceCatalogEntry(
                id=_string(d, path, "id"),
                base_rate=_number(d, path, "base_rate"),
                overflow_rate=_number(d, path, "overflow_rate"),
                prepurchased_hours=_number(d, path, "prepurchased_hours"),
            )
        )

    configs = []
    for i, c in enumerate(doc["configs"]):
        path = f"configs[{i}]"
        _require(
            c,
            path,
            {"device_id", "config_id", "device_count", "cpu_cores", "memory_gb"},
            {"device_id", "config_id", "device_count"},
        )
        count = c["device_count"]
        if isinstance(count, bool) or not isinstance(count, int):
            raise SchemaError(f"{path}.device_count", "expected an integer")
        configs.append(
            ConfigOption(
                device_id=_string(c, path, "device_id"),
                config_id=_string(c, path, "config_id"),
                device_count=count,
                cpu_cores=_number(c, path, "cpu_cores") if "cpu_cores" in c else None,
                memory_gb=_number(c, path, "memory_gb") if "memory_gb" in c else None,
            )
        )

    entries: dict[tuple[str, str, str], float] = {}
    for i, e in enumerate(doc.get("durations", [])):
        path = f"durations[{i}]"
        _require(
            e,
            path,
            {"workflow_id", "device_id", "config_id", "hours"},
            {"workflow_id", "device_id", "config_id", "hours"},
        )
        entries[
            (_string(e, path, "workflow_id"), _string(e, path, "device_id"), _string(e, path, "config_id"))
        ] = _number(e, path, "hours")

    problem = Problem.build(workflows, devices, configs, DurationTable(entries))
    if validate:
        validate_problem(problem, require_durations=require_durations)
    return problem


def save_problem(problem: Problem) -> str:
    doc: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "workflows": [
            {
                "id": w.id,
                "earliest_start": w.earliest_start,
                "deadline": w.deadline,
                "predecessors": sorted(w.predecessors),
                **({"features": dict(w.features)} if w.features is not None else {}),
            }
            for w in problem.workflows
        ],
        "devices": [
            {
                "id": d.id,
                "base_rate": d.base_rate,
                "overflow_rate": d.overflow_rate,
                "prepurchased_hours": d.prepurchased_hours,
            }
            for d in problem.devices
        ],
        "configs": [
            {
                "device_id": c.device_id,
                "config_id": c.config_id,
                "device_count": c.device_count,
                **({"cpu_cores": c.cpu_cores} if c.cpu_cores is not None else {}),
                **({"memory_gb": c.memory_gb} if c.memory_gb is not None else {}),
            }
            for c in problem.configs
        ],
    }
    if problem.durations.entries:
        doc["durations"] = [
            {"workflow_id": wid, "device_id": did, "config_id": kid, "hours": h}
            for (wid, did, kid), h in sorted(problem.durations.entries.items())
        ]
    return json.dumps(doc, indent=2) + "\n"


def save_schedule(vp: ValidatedProblem, schedule: Schedule, cost: CostBreakdown) -> str:
    per_device = []
    for d in vp.devices:
        u = cost.usage[d.id]
        per_device.append(
            {
                "device_id": d.id,
                "usage": u,
                "tier_pivot": cost.tier_pivot[d.id],
                "cost": tiered_cost(u, d.base_rate, d.overflow_rate, d.prepurchased_hours),
            }
        )
    doc = {
        "format_version": FORMAT_VERSION,
        "assignment": [
            {"workflow_id": wid, "device_id": did, "config_id": kid}
            for wid, (did, kid) in sorted(schedule.assignment.choice.items())
        ],
        "timing": [
            {"workflow_id": wid, "start": schedule.start[wid], "finish": schedule.finish[wid]}
            for wid in sorted(schedule.start)
        ],
        "cost": {"per_device": per_device, "total": cost.total},
    }
    return json.dumps(doc, indent=2) + "\n"


def load_schedule(text: str) -> tuple[Assignment, dict[str, float], dict[str, float], float]:
    """Parse a schedule document: (assignment, start, finish, total cost)."""
    doc = _loads(text)
    _require(doc, "$", {"format_version", "assignment", "timing", "cost"}, {"format_version", "assignment", "timing", "cost"})
    _check_version(doc, "$")
    choice = {}
    for i, a in enumerate(doc["assignment"]):
        path = f"assignment[{i}]"
        _require(a, path, {"workflow_id", "device_id", "config_id"}, {"workflow_id", "device_id", "config_id"})
        choice[_string(a, path, "workflow_id")] = (
            _string(a, path, "device_id"),
            _string(a, path, "config_id"),
        )
    start, finish = {}, {}
    for i, t in enumerate(doc["timing"]):
        path = f"timing[{i}]"
        _require(t, path, {"workflow_id", "start", "finish"}, {"workflow_id", "start", "finish"})
        wid = _string(t, path, "workflow_id")
        start[wid] = _number(t, path, "start")
        finish[wid] = _number(t, path, "finish")
    cost = doc["cost"]
    _require(cost, "$.cost", {"per_device", "total"}, {"per_device", "total"})
    return Assignment(choice), start, finish, _number(cost, "$.cost", "total")


def save_model(model: DurationRegressor, schema: FeatureSchema, extras: Mapping[str, Any] | None = None) -> str:
    doc: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "alpha": model.alpha_,
        "l1_ratio": model.l1_ratio_,
        "floor_s": model.floor,
        "intercept": model.intercept_,
        "features": [
            {
                "name": name,
                "coefficient": float(model.coef_[j]),
                "mean": float(model.feature_means_[j]),
                "std": float(model.feature_stds_[j]),
            }
            for j, name in enumerate(schema.names)
        ],
        "schema": {
            "numeric": list(schema.numeric),
            "categorical": {k: list(v) for k, v in schema.categorical.items()},
        },
    }
    if extras:
        doc.update(extras)
    return json.dumps(doc, indent=2) + "\n"


def load_model(text: str) -> tuple[DurationRegressor, FeatureSchema]:
    import numpy as np

    doc = _loads(text)
    _require(
        doc,
        "$",
        {"format_version", "family", "alpha", "l1_ratio", "floor_s", "intercept", "features", "schema", "training_metrics"},
        {"format_version", "family", "intercept", "features", "schema"},
    )
    _check_version(doc, "$")
    schema_doc = doc["schema"]
    _require(schema_doc, "$.schema", {"numeric", "categorical"}, {"numeric", "categorical"})
    schema = FeatureSchema(
        numeric=tuple(schema_doc["numeric"]),
        categorical={k: tuple(v) for k, v in schema_doc["categorical"].items()},
    )
    model = DurationRegressor(
        family=doc["family"],
        alpha=float(doc.get("alpha", 0.0)),
        l1_ratio=float(doc.get("l1_ratio", 0.0)),
        floor=float(doc.get("floor_s", 1.0)),
    )
    feats = doc["features"]
    if [f["name"] for f in feats] != list(schema.names):
        raise SchemaError("$.features", "feature order does not match schema")
    model.coef_ = np.array([float(f["coefficient"]) for f in feats])
    model.feature_means_ = np.array([float(f["mean"]) for f in feats])
    model.feature_stds_ = np.array([float(f["std"]) for f in feats])
    model.intercept_ = float(doc["intercept"])
    model.alpha_ = float(doc.get("alpha", 0.0))
    model.l1_ratio_ = float(doc.get("l1_ratio", 0.0))
    model.n_features_in_ = len(feats)
    return model, schema


def load_records(text: str) -> list[RunRecord]:
    """Parse the run-record CSV. The header row must match the record
    field list exactly."""
    reader = csv.reader(_stdio.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty records file") from None
    if tuple(header) != RECORD_FIELDS:
        raise ParseError(f"bad header: expected {','.join(RECORD_FIELDS)}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(RECORD_FIELDS):
            raise ParseError(f"row {lineno}: expected {len(RECORD_FIELDS)} columns")
        vals = dict(zip(RECORD_FIELDS, row))
        if vals["task_type"] not in TASK_TYPES:
            raise BadEnum(f"row {lineno}.task_type", f"got {vals['task_type']!r}")
        try:
            records.append(
                RunRecord(
                    job_id=vals["job_id"],
                    cpu_cores=int(vals["cpu_cores"]),
                    memory_gb=float(vals["memory_gb"]),
                    parallelism=int(vals["parallelism"]),
                    subtask_count=int(vals["subtask_count"]),
                    table_count=int(vals["table_count"]),
                    code_length=int(vals["code_length"]),
                    dataset_volume_gb=float(vals["dataset_volume_gb"]),
                    disk_volume_gb=float(vals["disk_volume_gb"]),
                    task_type=vals["task_type"],
                    observed_duration_s=float(vals["observed_duration_s"]),
                )
            )
        except ValueError as e:
            raise ParseError(f"row {lineno}: {e}") from None
    return records


def save_records(records: Sequence[RunRecord]) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    for r in records:
        writer.writerow([getattr(r, f) for f in RECORD_FIELDS])
    return buf.getvalue()


def compute_throughput(completed: int, elapsed_s: float) -> float:
    """Jobs per second."""
    if completed == 0:
        return 0.0
    if elapsed_s <= 0:
        raise ZeroElapsed("elapsed time must be > 0")
    return completed / elapsed_s


def compute_reliability(successes: int, fault_recovered: int, total: int) -> float:
    """(successes + fault-recovered) / total requests."""
    if total <= 0:
        raise ZeroTotal("total requests must be > 0")
    if successes + fault_recovered > total:
        raise Overcount(f"{successes}+{fault_recovered} exceeds total {total}")
    return (successes + fault_recovered) / total


def compute_ccr(initial_cost: float, final_cost: float) -> float:
    """Cost-change rate as a savings fraction: (IC - FC) / IC."""
    if initial_cost <= 0:
        raise ZeroInitialCost("initial cost must be > 0")
    return (initial_cost - final_cost) / initial_cost


@dataclass(frozen=True)
class OrchestrationReport:
    jobs_completed: int
    elapsed_s: float
    throughput_jobs_per_s: float
    successes: int
    fault_recovered: int
    total_requests: int
    reliability: float
    initial_cost: float
    final_cost: float
    cost_change_rate: float


@dataclass(frozen=True)
class RunLog:
    problem: Problem
    final_assignment: Assignment
    outcomes: Mapping[str, str]  # workflow id -> success | fault_recovered | failed
    elapsed_s: float


OUTCOME_STATES = ("success", "fault_recovered", "failed")


def load_runlog(text: str) -> RunLog:
    doc = _loads(text)
    _require(
        doc,
        "$",
        {"format_version", "problem", "final_assignment", "outcomes", "elapsed_s"},
        {"format_version", "problem", "final_assignment", "outcomes", "elapsed_s"},
    )
    _check_version(doc, "$")
    problem = load_problem(json.dumps(doc["problem"]))
    choice = {}
    for i, a in enumerate(doc["final_assignment"]):
        path = f"final_assignment[{i}]"
        _require(a, path, {"workflow_id", "device_id", "config_id"}, {"workflow_id", "device_id", "config_id"})
        choice[_string(a, path, "workflow_id")] = (
            _string(a, path, "device_id"),
            _string(a, path, "config_id"),
        )
    outcomes = {}
    for i, o in enumerate(doc["outcomes"]):
        path = f"outcomes[{i}]"
        _require(o, path, {"workflow_id", "status"}, {"workflow_id", "status"})
        status = _string(o, path, "status")
        if status not in OUTCOME_STATES:
            raise BadEnum(f"{path}.status", f"got {status!r}")
        outcomes[_string(o, path, "workflow_id")] = status
    return RunLog(
        problem=problem,
        final_assignment=Assignment(choice),
        outcomes=outcomes,
        elapsed_s=_number(doc, "$", "elapsed_s"),
    )


def baseline_assignment(vp: ValidatedProblem) -> Assignment:
    """Pre-scheduling default: each workflow's lexicographically first
    configuration choice."""
    return Assignment({wid: vp.choices_by_workflow[wid][0] for wid in vp.workflow_by_id})


def orchestration_report(runlog: RunLog) -> OrchestrationReport:
    """Aggregate a run log into the orchestration metrics.

    Initial cost is evaluated under the baseline assignment, final cost
    under the run's assignment; throughput counts completed jobs
    (successes plus fault-recovered)."""
    vp = validate_problem(runlog.problem)
    successes = sum(1 for s in runlog.outcomes.values() if s == "success")
    recovered = sum(1 for s in runlog.outcomes.values() if s == "fault_recovered")
    total = len(runlog.outcomes)
    completed = successes + recovered
    ic = evaluate_cost(vp, baseline_assignment(vp)).total
    fc = evaluate_cost(vp, runlog.final_assignment).total
    return OrchestrationReport(
        jobs_completed=completed,
        elapsed_s=runlog.elapsed_s,
        throughput_jobs_per_s=compute_throughput(completed, runlog.elapsed_s),
        successes=successes,
        fault_recovered=recovered,
        total_requests=total,
        reliability=compute_reliability(successes, recovered, total),
        initial_cost=ic,
        final_cost=fc,
        cost_change_rate=compute_ccr(ic, fc),
    )


def _canonical(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, str)):
        return json.dumps(value)
    if isinstance(value, Mapping):
        inner = ", ".join(f"{json.dumps(k)}: {_canonical(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_canonical(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)}")


def save_report(report: OrchestrationReport) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "jobs_completed": report.jobs_completed,
        "elapsed_s": float(report.elapsed_s),
        "throughput_jobs_per_s": float(report.throughput_jobs_per_s),
        "successes": report.successes,
        "fault_recovered": report.fault_recovered,
        "total_requests": report.total_requests,
        "reliability": float(report.reliability),
        "initial_cost": float(report.initial_cost),
        "final_cost": float(report.final_cost),
        "cost_change_rate": float(report.cost_change_rate),
    }
    return _canonical(doc) + "\n"


def load_report(text: str) -> OrchestrationReport:
    doc = _loads(text)
    fields = {
        "jobs_completed",
        "elapsed_s",
        "throughput_jobs_per_s",
        "successes",
        "fault_recovered",
        "total_requests",
        "reliability",
        "initial_cost",
        "final_cost",
        "cost_change_rate",
    }
    _require(doc, "$", fields | {"format_version"}, fields | {"format_version"})
    _check_version(doc, "$")
    return OrchestrationReport(
        jobs_completed=int(doc["jobs_completed"]),
        elapsed_s=_number(doc, "$", "elapsed_s"),
        throughput_jobs_per_s=_number(doc, "$", "throughput_jobs_per_s"),
        successes=int(doc["successes"]),
        fault_recovered=int(doc["fault_recovered"]),
        total_requests=int(doc["total_requests"]),
        reliability=_number(doc, "$", "reliability"),
        initial_cost=_number(doc, "$", "initial_cost"),
        final_cost=_number(doc, "$", "final_cost"),
        cost_change_rate=_number(doc, "$", "cost_change_rate"),
    )

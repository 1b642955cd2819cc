"""Domain model for cost-orchestration instances.

Holds the optimization instance types (workflows, device catalog,
configuration options, duration table), instance validation, tiered-pricing
cost evaluation, earliest-start scheduling and full constraint checking.

All values are in problem units: durations and pre-purchased allowances in
hours, timeline values in hours from a problem-level epoch, rates in currency
per device-hour.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

Choice = tuple[str, str]  # (device_id, config_id)


@dataclass(frozen=True)
class WorkflowSpec:
    id: str
    earliest_start: float
    deadline: float
    predecessors: frozenset[str] = frozenset()
    # Optional static predictor features (parallelism, subtask_count, ...)
    # carried along for model-supplied duration tables.
    features: Mapping[str, object] | None = None


@dataclass(frozen=True)
class DeviceCatalogEntry:
    id: str
    base_rate: float
    overflow_rate: float
    prepurchased_hours: float


@dataclass(frozen=True)
class ConfigOption:
    device_id: str
    config_id: str
    device_count: int
    # Per-device resource shape; only needed when durations come from a
    # fitted model rather than the instance file.
    cpu_cores: float | None = None
    memory_gb: float | None = None


@dataclass(frozen=True)
class DurationTable:
    """Execution hours per (workflow id, device id, config id)."""

    entries: Mapping[tuple[str, str, str], float]

    def get(self, workflow_id: str, device_id: str, config_id: str) -> float | None:
        return self.entries.get((workflow_id, device_id, config_id))


@dataclass(frozen=True)
class Problem:
    workflows: tuple[WorkflowSpec, ...]
    precedence: frozenset[tuple[str, str]]
    devices: tuple[DeviceCatalogEntry, ...]
    configs: tuple[ConfigOption, ...]
    durations: DurationTable

    @staticmethod
    def build(
        workflows,
        devices,
        configs,
        durations: DurationTable,
        precedence=None,
    ) -> "Problem":
        """Construct a Problem, deriving precedence pairs from workflow
        predecessor sets when no explicit pair set is given."""
        workflows = tuple(workflows)
        if precedence is None:
            precedence = frozenset(
                (pred, w.id) for w in workflows for pred in w.predecessors
            )
        return Problem(
            workflows=workflows,
            precedence=frozenset(precedence),
            devices=tuple(devices),
            configs=tuple(configs),
            durations=durations,
        )


@dataclass(frozen=True)
class Assignment:
    """One (device, config) choice per workflow."""

    choice: Mapping[str, Choice]


@dataclass(frozen=True)
class Schedule:
    assignment: Assignment
    start: Mapping[str, float]
    finish: Mapping[str, float]
    duration: Mapping[str, float]


@dataclass(frozen=True)
class CostBreakdown:
    usage: Mapping[str, float]
    tier_pivot: Mapping[str, float]
    base_cost: float
    overflow_cost: float
    total: float


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    ids: tuple[str, ...] = ()


class ValidationErrors(ValueError):
    """Raised by validate_problem; carries every violation found."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


class UnknownChoice(KeyError):
    """An assignment references a (workflow, device, config) with no
    duration entry or no catalog config."""


class InfeasibleSchedule(Exception):
    """No start times can satisfy the deadline windows for this assignment.

    ``deficits`` maps each culprit workflow id to the number of hours by
    which its earliest possible finish overshoots its deadline.
    """

    def __init__(self, deficits: dict[str, float]):
        self.deficits = deficits
        culprits = ", ".join(sorted(deficits))
        super().__init__(f"deadline-infeasible for workflows: {culprits}")


@dataclass(frozen=True)
class ValidatedProblem:
    """A Problem known to satisfy all structural invariants, with lookup
    indices and a topological workflow order precomputed."""

    problem: Problem
    workflow_by_id: Mapping[str, WorkflowSpec]
    device_by_id: Mapping[str, DeviceCatalogEntry]
    config_by_key: Mapping[Choice, ConfigOption]
    choices_by_workflow: Mapping[str, tuple[Choice, ...]]
    topo_order: tuple[str, ...]
    predecessors: Mapping[str, tuple[str, ...]]

    @property
    def workflows(self) -> tuple[WorkflowSpec, ...]:
        return self.problem.workflows

    @property
    def devices(self) -> tuple[DeviceCatalogEntry, ...]:
        return self.problem.devices

    @property
    def precedence(self) -> frozenset[tuple[str, str]]:
        return self.problem.precedence

    def duration(self, workflow_id: str, device_id: str, config_id: str) -> float:
        h = self.problem.durations.get(workflow_id, device_id, config_id)
        if h is None:
            raise UnknownChoice(
                f"no duration entry for ({workflow_id}, {device_id}, {config_id})"
            )
        return h


def _find_cycle(nodes, edges) -> list[str] | None:
    """Return one directed cycle as a node list (first == last), or None."""
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for i, j in sorted(edges):
        if i in succ and j in succ:
            succ[i].append(j)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        color[n] = GREY
        stack.append(n)
        for m in succ[n]:
            if color[m] == GREY:
                return stack[stack.index(m):] + [m]
            if color[m] == WHITE:
                cyc = visit(m)
                if cyc is not None:
                    return cyc
        stack.pop()
        color[n] = BLACK
        return None

    for n in sorted(nodes):
        if color[n] == WHITE:
            cyc = visit(n)
            if cyc is not None:
                return cyc
    return None


def _topo_order(nodes, edges) -> tuple[str, ...]:
    """Kahn's algorithm; ready set resolved in lexicographic id order."""
    import heapq

    indeg = {n: 0 for n in nodes}
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for i, j in edges:
        indeg[j] += 1
        succ[i].append(j)
    ready = [n for n in nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in sorted(succ[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, m)
    return tuple(order)


def validate_problem(problem: Problem, require_durations: bool = True) -> ValidatedProblem:
    """Check every structural invariant and return a validated wrapper.

    Raises ValidationErrors carrying all violations found, not just the
    first. ``require_durations=False`` skips the per-workflow duration
    coverage check (used for instance skeletons whose durations will be
    filled in by a fitted model).
    """
    violations: list[Violation] = []
    wf_ids: set[str] = set()
    for w in problem.workflows:
        if w.id in wf_ids:
            violations.append(
                Violation("duplicate_id", f"duplicate workflow id {w.id!r}", (w.id,))
            )
        wf_ids.add(w.id)
        if not (w.earliest_start < w.deadline):
            violations.append(
                Violation(
                    "window_inverted",
                    f"workflow {w.id!r}: earliest_start {w.earliest_start} >= deadline {w.deadline}",
                    (w.id,),
                )
            )

    dev_ids: set[str] = set()
    for d in problem.devices:
        if d.id in dev_ids:
            violations.append(
                Violation("duplicate_id", f"duplicate device id {d.id!r}", (d.id,))
            )
        dev_ids.add(d.id)
        if not (0.0 <= d.base_rate <= d.overflow_rate):
            violations.append(
                Violation(
                    "invalid_field",
                    f"device {d.id!r}: rates must satisfy 0 <= base <= overflow",
                    (d.id,),
                )
            )
        if d.prepurchased_hours < 0:
            violations.append(
                Violation(
                    "invalid_field",
                    f"device {d.id!r}: prepurchased_hours must be >= 0",
                    (d.id,),
                )
            )

    config_keys: set[Choice] = set()
    for c in problem.configs:
        key = (c.device_id, c.config_id)
        if key in config_keys:
            violations.append(
                Violation("duplicate_id", f"duplicate config {key}", key)
            )
        config_keys.add(key)
        if c.device_id not in dev_ids:
            violations.append(
                Violation(
                    "dangling_reference",
                    f"config {key} references unknown device {c.device_id!r}",
                    key,
                )
            )
        if not (isinstance(c.device_count, int) and c.device_count >= 1):
            violations.append(
                Violation(
                    "invalid_field",
                    f"config {key}: device_count must be an integer >= 1",
                    key,
                )
            )

    for (wid, did, kid), h in problem.durations.entries.items():
        if wid not in wf_ids:
            violations.append(
                Violation(
                    "dangling_reference",
                    f"duration entry references unknown workflow {wid!r}",
                    (wid,),
                )
            )
        if (did, kid) not in config_keys:
            violations.append(
                Violation(
                    "dangling_reference",
                    f"duration entry ({wid}, {did}, {kid}) has no matching config",
                    (wid, did, kid),
                )
            )
        if not (math.isfinite(h) and h > 0):
            violations.append(
                Violation(
                    "non_positive_duration",
                    f"duration for ({wid}, {did}, {kid}) must be finite and > 0, got {h}",
                    (wid, did, kid),
                )
            )

    # Effective precedence set: explicit pairs plus per-workflow predecessors.
    pairs = set(problem.precedence)
    for w in problem.workflows:
        for pred in w.predecessors:
            pairs.add((pred, w.id))
    for i, j in sorted(pairs):
        for end in (i, j):
            if end not in wf_ids:
                violations.append(
                    Violation(
                        "dangling_reference",
                        f"precedence pair ({i}, {j}) references unknown workflow {end!r}",
                        (i, j),
                    )
                )

    valid_pairs = {(i, j) for i, j in pairs if i in wf_ids and j in wf_ids}
    cycle = _find_cycle(wf_ids, valid_pairs)
    if cycle is not None:
        violations.append(
            Violation(
                "cycle_detected",
                "precedence cycle: " + " -> ".join(cycle),
                tuple(cycle),
            )
        )

    choices: dict[str, list[Choice]] = {wid: [] for wid in wf_ids}
    for (wid, did, kid) in problem.durations.entries:
        if wid in choices and (did, kid) in config_keys:
            choices[wid].append((did, kid))
    if require_durations:
        for wid in sorted(wf_ids):
            if not choices[wid]:
                violations.append(
                    Violation(
                        "empty_config_set",
                        f"workflow {wid!r} has no duration entry",
                        (wid,),
                    )
                )

    if violations:
        raise ValidationErrors(violations)

    return ValidatedProblem(
        problem=problem,
        workflow_by_id={w.id: w for w in problem.workflows},
        device_by_id={d.id: d for d in problem.devices},
        config_by_key={(c.device_id, c.config_id): c for c in problem.configs},
        choices_by_workflow={wid: tuple(sorted(cs)) for wid, cs in choices.items()},
        topo_order=_topo_order(wf_ids, valid_pairs),
        predecessors={
            w.id: tuple(sorted({i for i, j in valid_pairs if j == w.id}))
            for w in problem.workflows
        },
    )


def _check_coverage(vp: ValidatedProblem, assignment: Assignment) -> None:
    for wid in vp.workflow_by_id:
        if wid not in assignment.choice:
            raise UnknownChoice(f"assignment missing workflow {wid!r}")


def device_usage(vp: ValidatedProblem, assignment: Assignment) -> dict[str, float]:
    """Total device-hours per device: sum over assigned workflows of
    duration times the configuration's device count. Unused devices map
    to 0."""
    _check_coverage(vp, assignment)
    usage = {d.id: 0.0 for d in vp.devices}
    for wid, (did, kid) in assignment.choice.items():
        cfg = vp.config_by_key.get((did, kid))
        if cfg is None:
            raise UnknownChoice(f"no config ({did}, {kid}) for workflow {wid!r}")
        h = vp.duration(wid, did, kid)
        usage[did] += h * cfg.device_count
    return usage


def tiered_cost(usage: float, base_rate: float, overflow_rate: float, allowance: float) -> float:
    """Piecewise tariff for one device: the first ``allowance`` device-hours
    bill at the base rate, the remainder at the overflow rate."""
    return min(usage, allowance) * base_rate + max(usage - allowance, 0.0) * overflow_rate


def evaluate_cost(vp: ValidatedProblem, assignment: Assignment) -> CostBreakdown:
    """Evaluate the tiered tariff for an assignment.

    Reads only the assignment, never schedule timing: cost is
    timing-independent by construction.
    """
    usage = device_usage(vp, assignment)
    pivot: dict[str, float] = {}
    base = 0.0
    overflow = 0.0
    for d in vp.devices:
        u = usage[d.id]
        pivot[d.id] = max(u, d.prepurchased_hours)
        base += min(u, d.prepurchased_hours) * d.base_rate
        overflow += max(u - d.prepurchased_hours, 0.0) * d.overflow_rate
    return CostBreakdown(
        usage=usage,
        tier_pivot=pivot,
        base_cost=base,
        overflow_cost=overflow,
        total=base + overflow,
    )


def earliest_schedule(vp: ValidatedProblem, assignment: Assignment) -> Schedule:
    """Earliest-start schedule for a fixed assignment.

    In topological order each workflow starts at the later of its window
    start and its predecessors' finishes. Raises InfeasibleSchedule with
    per-workflow slack deficits if any deadline is overshot; earliest
    starts are feasibility-optimal, so no other start times can help.
    """
    _check_coverage(vp, assignment)
    start: dict[str, float] = {}
    finish: dict[str, float] = {}
    dur: dict[str, float] = {}
    deficits: dict[str, float] = {}
    for wid in vp.topo_order:
        w = vp.workflow_by_id[wid]
        did, kid = assignment.choice[wid]
        if (did, kid) not in vp.config_by_key:
            raise UnknownChoice(f"no config ({did}, {kid}) for workflow {wid!r}")
        g = vp.duration(wid, did, kid)
        s = w.earliest_start
        for pred in vp.predecessors[wid]:
            s = max(s, finish[pred])
        start[wid] = s
        finish[wid] = s + g
        dur[wid] = g
        if finish[wid] > w.deadline:
            deficits[wid] = finish[wid] - w.deadline
    if deficits:
        raise InfeasibleSchedule(deficits)
    return Schedule(assignment=assignment, start=start, finish=finish, duration=dur)


def check_schedule(vp: ValidatedProblem, schedule: Schedule, tol: float = 1e-6) -> list[Violation]:
    """Check a schedule against every instance constraint.

    Returns one Violation per breach, naming the constraint family
    (choice coverage, finish=start+duration, duration-table match,
    precedence, window start, deadline); empty list means feasible.
    All comparisons are non-strict within ``tol``.
    """
    out: list[Violation] = []
    a = schedule.assignment
    for wid in sorted(vp.workflow_by_id):
        if wid not in a.choice:
            out.append(
                Violation("choice", f"workflow {wid!r} has no configuration choice", (wid,))
            )
            continue
        did, kid = a.choice[wid]
        if (did, kid) not in vp.config_by_key or vp.problem.durations.get(wid, did, kid) is None:
            out.append(
                Violation(
                    "choice",
                    f"workflow {wid!r} choice ({did}, {kid}) is not an instance option",
                    (wid, did, kid),
                )
            )
            continue
        w = vp.workflow_by_id[wid]
        s = schedule.start.get(wid)
        t = schedule.finish.get(wid)
        g = schedule.duration.get(wid)
        if s is None or t is None or g is None:
            out.append(
                Violation("timing", f"workflow {wid!r} missing timing values", (wid,))
            )
            continue
        h = vp.duration(wid, did, kid)
        if abs(t - (s + g)) > tol:
            out.append(
                Violation(
                    "finish_link",
                    f"workflow {wid!r}: finish {t} != start {s} + duration {g}",
                    (wid,),
                )
            )
        if abs(g - h) > tol:
            out.append(
                Violation(
                    "duration_match",
                    f"workflow {wid!r}: duration {g} != table entry {h}",
                    (wid,),
                )
            )
        if s < w.earliest_start - tol:
            out.append(
                Violation(
                    "window_start",
                    f"workflow {wid!r}: start {s} before window start {w.earliest_start}",
                    (wid,),
                )
            )
        if t > w.deadline + tol:
            out.append(
                Violation(
                    "deadline",
                    f"workflow {wid!r}: finish {t} after deadline {w.deadline}",
                    (wid,),
                )
            )
    for i, j in sorted(vp.precedence):
        ti = schedule.finish.get(i)
        sj = schedule.start.get(j)
        if ti is None or sj is None:
            continue  # already reported as missing timing
        if ti > sj + tol:
            out.append(
                Violation(
                    "precedence",
                    f"workflow {i!r} finishes at {ti}, after successor {j!r} starts at {sj}",
                    (i, j),
                )
            )
    return out

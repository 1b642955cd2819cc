"""MILP construction and branch-and-bound search.

Builds the assignment/scheduling model from a validated instance (one
binary per (workflow, device, config) choice, continuous timing and usage
variables) and minimizes the tiered-pricing objective by LP-relaxation
branch-and-bound: best-bound node order, most-fractional branching,
bound-based pruning against the incumbent.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import (
    Assignment,
    CostBreakdown,
    Schedule,
    ValidatedProblem,
    evaluate_cost,
)
from .simplex import EQ, GE, INFEASIBLE, LE, OPTIMAL, LpOutcome, LpProblem, LpRow, solve_lp

INF = float("inf")


@dataclass(frozen=True)
class MilpVariable:
    name: str
    kind: str  # "binary" | "continuous"
    lower: float
    upper: float


@dataclass(frozen=True)
class MilpModel:
    problem: ValidatedProblem
    variables: tuple[MilpVariable, ...]
    rows: tuple[LpRow, ...]
    row_tags: tuple[str, ...]
    objective: tuple[float, ...]
    objective_offset: float
    # binary column index -> (workflow id, device id, config id)
    binary_choice: Mapping[int, tuple[str, str, str]]
    index: Mapping[str, int]


@dataclass(frozen=True)
class SolverConfig:
    integrality_tolerance: float = 1e-6
    absolute_gap: float = 1e-6
    node_limit: int | None = None
    time_limit: float | None = None
    prune: bool = True  # disabling only affects node counts, never the optimum

    def __post_init__(self):
        if self.integrality_tolerance <= 0 or self.absolute_gap <= 0:
            raise ValueError("tolerances must be > 0")


@dataclass(frozen=True)
class SolveReport:
    nodes_explored: int
    nodes_pruned: int
    best_bound: float
    wall_time: float


@dataclass(frozen=True)
class SolveOutcome:
    status: str  # "optimal" | "infeasible" | "node_limit" | "time_limit"
    objective: float | None
    x: np.ndarray | None
    report: SolveReport


class InconsistentIncumbent(RuntimeError):
    """Recomputed cost of an incumbent deviates from the MILP objective."""


def build_milp(vp: ValidatedProblem, usage_cap: Mapping[str, float] | None = None) -> MilpModel:
    """Build the MILP for a validated instance.

    Variables: one binary per duration-table choice, then s/t/g per
    workflow and u/u1 per device (u1 is the tier pivot, a continuous
    decision variable). ``usage_cap`` optionally replaces the vacuous
    u <= u1 coupling with a hard per-device usage cap.
    """
    variables: list[MilpVariable] = []
    index: dict[str, int] = {}
    binary_choice: dict[int, tuple[str, str, str]] = {}

    def add(name: str, kind: str, lower: float, upper: float) -> int:
        idx = len(variables)
        variables.append(MilpVariable(name, kind, lower, upper))
        index[name] = idx
        return idx

    wids = sorted(vp.workflow_by_id)
    dids = sorted(vp.device_by_id)
    for wid in wids:
        for did, kid in vp.choices_by_workflow[wid]:
            j = add(f"x[{wid},{did},{kid}]", "binary", 0.0, 1.0)
            binary_choice[j] = (wid, did, kid)
    for wid in wids:
        w = vp.workflow_by_id[wid]
        add(f"s[{wid}]", "continuous", w.earliest_start, INF)
        add(f"t[{wid}]", "continuous", 0.0, w.deadline)
        add(f"g[{wid}]", "continuous", 0.0, INF)
    for did in dids:
        add(f"u[{did}]", "continuous", 0.0, INF)
        add(f"u1[{did}]", "continuous", 0.0, INF)

    n = len(variables)
    rows: list[LpRow] = []
    tags: list[str] = []

    def row(coeffs: dict[int, float], rel: str, rhs: float, tag: str) -> None:
        dense = [0.0] * n
        for j, v in coeffs.items():
            dense[j] = v
        rows.append(LpRow(tuple(dense), rel, rhs))
        tags.append(tag)

    # Exactly one configuration per workflow.
    for wid in wids:
        coeffs = {
            index[f"x[{wid},{did},{kid}]"]: 1.0
            for did, kid in vp.choices_by_workflow[wid]
        }
        row(coeffs, EQ, 1.0, f"one_choice:{wid}")

    # Device usage balance: sum h*b*x - u = 0.
    for did in dids:
        coeffs: dict[int, float] = {index[f"u[{did}]"]: -1.0}
        for wid in wids:
            for d2, kid in vp.choices_by_workflow[wid]:
                if d2 != did:
                    continue
                h = vp.duration(wid, did, kid)
                b = vp.config_by_key[(did, kid)].device_count
                coeffs[index[f"x[{wid},{did},{kid}]"]] = h * b
        row(coeffs, EQ, 0.0, f"usage:{did}")

    # Usage / pivot coupling, and the pivot floor at the allowance.
    for did in dids:
        if usage_cap is not None and did in usage_cap:
            row({index[f"u[{did}]"]: 1.0}, LE, float(usage_cap[did]), f"usage_cap:{did}")
        else:
            row(
                {index[f"u[{did}]"]: 1.0, index[f"u1[{did}]"]: -1.0},
                LE,
                0.0,
                f"pivot_coupling:{did}",
            )
        a_d = vp.device_by_id[did].prepurchased_hours
        row({index[f"u1[{did}]"]: 1.0}, GE, a_d, f"pivot_floor:{did}")

    # Timing: s + g = t, and g equals the chosen table duration.
    for wid in wids:
        row(
            {index[f"s[{wid}]"]: 1.0, index[f"g[{wid}]"]: 1.0, index[f"t[{wid}]"]: -1.0},
            EQ,
            0.0,
            f"finish_link:{wid}",
        )
        coeffs = {index[f"g[{wid}]"]: -1.0}
        for did, kid in vp.choices_by_workflow[wid]:
            coeffs[index[f"x[{wid},{did},{kid}]"]] = vp.duration(wid, did, kid)
        row(coeffs, EQ, 0.0, f"duration_link:{wid}")

    # Precedence: predecessor finishes before successor starts.
    for i, j in sorted(vp.precedence):
        row(
            {index[f"t[{i}]"]: 1.0, index[f"s[{j}]"]: -1.0},
            LE,
            0.0,
            f"precedence:{i}->{j}",
        )

    # Objective: overflow margin on the pivot plus base-rate usage, minus
    # the constant allowance term.
    objective = [0.0] * n
    offset = 0.0
    for did in dids:
        d = vp.device_by_id[did]
        margin = d.overflow_rate - d.base_rate
        objective[index[f"u1[{did}]"]] = margin
        objective[index[f"u[{did}]"]] = d.base_rate
        offset -= d.prepurchased_hours * margin

    return MilpModel(
        problem=vp,
        variables=tuple(variables),
        rows=tuple(rows),
        row_tags=tuple(tags),
        objective=tuple(objective),
        objective_offset=offset,
        binary_choice=binary_choice,
        index=index,
    )


def _node_lp(model: MilpModel, fixes: dict[int, float]) -> LpProblem:
    bounds = []
    for j, v in enumerate(model.variables):
        if j in fixes:
            bounds.append((fixes[j], fixes[j]))
        else:
            bounds.append((v.lower, v.upper))
    return LpProblem(model.objective, model.rows, tuple(bounds))


def solve(model: MilpModel, cfg: SolverConfig = SolverConfig()) -> SolveOutcome:
    """Branch-and-bound over the LP relaxation.

    Nodes are explored best-bound-first (ties: deeper first, then creation
    order); branching picks the most-fractional binary, ties broken by
    lowest column index, i.e. lexicographic (workflow, device, config).
    """
    t0 = time.perf_counter()
    binaries = sorted(model.binary_choice)
    tol = cfg.integrality_tolerance

    incumbent_obj = INF
    incumbent_x: np.ndarray | None = None
    nodes_explored = 0
    nodes_pruned = 0
    seq = 0
    limit_status: str | None = None

    root = solve_lp(_node_lp(model, {}))
    nodes_explored += 1
    heap: list[tuple[float, int, int, dict[int, float], LpOutcome]] = []
    if root.status == OPTIMAL:
        heapq.heappush(heap, (root.objective, 0, seq, {}, root))
    # Unbounded cannot occur: the objective variables are bounded below
    # and have non-negative coefficients.

    def over_limits() -> str | None:
        if cfg.node_limit is not None and nodes_explored >= cfg.node_limit:
            return "node_limit"
        if cfg.time_limit is not None and time.perf_counter() - t0 >= cfg.time_limit:
            return "time_limit"
        return None

    while heap:
        limit_status = over_limits()
        if limit_status:
            break
        bound, negdepth, _, fixes, lp_out = heapq.heappop(heap)
        if cfg.prune and bound >= incumbent_obj - cfg.absolute_gap:
            nodes_pruned += 1
            continue
        x = lp_out.x
        fractional = [
            (abs(x[j] - round(x[j])), j)
            for j in binaries
            if abs(x[j] - round(x[j])) > tol
        ]
        if not fractional:
            if lp_out.objective < incumbent_obj:
                incumbent_obj = lp_out.objective
                incumbent_x = x
            continue
        # Most fractional: largest distance from integrality, lowest index.
        _, branch_var = max(fractional, key=lambda t: (t[0], -t[1]))
        for value in (math.floor(x[branch_var]), math.ceil(x[branch_var])):
            child_fixes = dict(fixes)
            child_fixes[branch_var] = float(value)
            child = solve_lp(_node_lp(model, child_fixes))
            nodes_explored += 1
            if child.status != OPTIMAL:
                continue
            if cfg.prune and child.objective >= incumbent_obj - cfg.absolute_gap:
                nodes_pruned += 1
                continue
            seq += 1
            heapq.heappush(heap, (child.objective, negdepth - 1, seq, child_fixes, child))

    best_bound = incumbent_obj
    if heap:
        best_bound = min(best_bound, min(entry[0] for entry in heap))
    report = SolveReport(
        nodes_explored=nodes_explored,
        nodes_pruned=nodes_pruned,
        best_bound=best_bound + model.objective_offset if math.isfinite(best_bound) else best_bound,
        wall_time=time.perf_counter() - t0,
    )
    if limit_status:
        return SolveOutcome(
            limit_status,
            incumbent_obj + model.objective_offset if incumbent_x is not None else None,
            incumbent_x,
            report,
        )
    if incumbent_x is None:
        return SolveOutcome(INFEASIBLE, None, None, report)
    return SolveOutcome(OPTIMAL, incumbent_obj + model.objective_offset, incumbent_x, report)


def extract_solution(
    model: MilpModel,
    outcome: SolveOutcome,
    cost_tolerance: float = 1e-6,
    integrality_tolerance: float = 1e-6,
) -> tuple[Assignment, Schedule, CostBreakdown]:
    """Map an incumbent back to domain objects.

    The cost is recomputed from the assignment through the tariff
    evaluator and cross-checked against the MILP objective; a deviation
    beyond tolerance signals a solver bug.
    """
    if outcome.x is None:
        raise ValueError("outcome carries no incumbent")
    vp = model.problem
    x = outcome.x
    choice: dict[str, tuple[str, str]] = {}
    for j, (wid, did, kid) in model.binary_choice.items():
        if x[j] >= 1.0 - integrality_tolerance:
            if wid in choice:
                raise InconsistentIncumbent(f"workflow {wid!r} has two active choices")
            choice[wid] = (did, kid)
    missing = set(vp.workflow_by_id) - set(choice)
    if missing:
        raise InconsistentIncumbent(f"no active choice for workflows {sorted(missing)}")

    assignment = Assignment(choice)
    start = {wid: float(x[model.index[f"s[{wid}]"]]) for wid in vp.workflow_by_id}
    finish = {wid: float(x[model.index[f"t[{wid}]"]]) for wid in vp.workflow_by_id}
    duration = {wid: float(x[model.index[f"g[{wid}]"]]) for wid in vp.workflow_by_id}
    schedule = Schedule(assignment=assignment, start=start, finish=finish, duration=duration)

    cost = evaluate_cost(vp, assignment)
    if outcome.objective is not None and abs(cost.total - outcome.objective) > cost_tolerance:
        raise InconsistentIncumbent(
            f"recomputed cost {cost.total} deviates from objective {outcome.objective}"
        )
    return assignment, schedule, cost


def solve_problem(
    vp: ValidatedProblem, cfg: SolverConfig = SolverConfig()
) -> tuple[SolveOutcome, Assignment | None, Schedule | None, CostBreakdown | None]:
    """Convenience wrapper: build, solve, extract when an incumbent exists."""
    model = build_milp(vp)
    outcome = solve(model, cfg)
    if outcome.x is None:
        return outcome, None, None, None
    assignment, schedule, cost = extract_solution(
        model, outcome, integrality_tolerance=cfg.integrality_tolerance
    )
    return outcome, assignment, schedule, cost

import numpy as np
import pytest

from costplan.bench import GeneratorConfig, brute_force_optimum, generate_problem
from costplan.core import (
    ConfigOption,
    DeviceCatalogEntry,
    WorkflowSpec,
    earliest_schedule,
    evaluate_cost,
    validate_problem,
)
from costplan.simplex import INFEASIBLE, OPTIMAL
from costplan.solver import (
    InconsistentIncumbent,
    SolverConfig,
    build_milp,
    extract_solution,
    solve,
    solve_problem,
)
from tests.conftest import make_problem


class TestBuild:
    def test_minimal_model_shape(self, validated):
        m = build_milp(validated)
        kinds = [v.kind for v in m.variables]
        assert kinds.count("binary") == 1
        assert kinds.count("continuous") == 5  # s, t, g, u, u1
        assert m.binary_choice == {0: ("w1", "d1", "k1")}

    def test_no_precedence_no_precedence_rows(self, validated):
        m = build_milp(validated)
        assert not any(t.startswith("precedence") for t in m.row_tags)

    def test_binary_count_scales_with_table(self):
        wfs = [WorkflowSpec(f"w{i}", 0.0, 100.0) for i in range(2)]
        devs = [DeviceCatalogEntry(f"d{i}", 1.0, 2.0, 0.0) for i in range(2)]
        cfgs = [ConfigOption(d.id, f"k{j}", 1) for d in devs for j in range(2)]
        durs = {
            (w.id, c.device_id, c.config_id): 1.0 for w in wfs for c in cfgs
        }
        vp = validate_problem(make_problem(wfs, devs, cfgs, durs))
        m = build_milp(vp)
        assert sum(v.kind == "binary" for v in m.variables) == 8

    def test_precedence_rows_match_pairs(self, chain_problem):
        vp = validate_problem(chain_problem)
        m = build_milp(vp)
        prec = [t for t in m.row_tags if t.startswith("precedence")]
        assert prec == ["precedence:wi->wj"]

    def test_usage_cap_replaces_coupling(self, validated):
        m = build_milp(validated, usage_cap={"d1": 4.0})
        assert any(t == "usage_cap:d1" for t in m.row_tags)
        assert not any(t.startswith("pivot_coupling") for t in m.row_tags)


class TestSolve:
    def test_picks_cheaper_config(self, two_config_problem):
        vp = validate_problem(two_config_problem)
        outcome, assignment, schedule, cost = solve_problem(vp)
        assert outcome.status == OPTIMAL
        assert assignment.choice["w1"] == ("d1", "k2")
        # 8 usage hours, allowance 0, overflow rate 2
        assert cost.total == pytest.approx(16.0)

    def test_overflow_margin_shifts_optimum(self):
        # k1 uses 5h on a device with a 4h allowance, k2 uses 4.5h; at base
        # rate k1 is cheaper, but the overflow rate makes k2 win.
        p = make_problem(
            [WorkflowSpec("w", 0.0, 100.0)],
            [DeviceCatalogEntry("d", 1.0, 10.0, 4.0)],
            [ConfigOption("d", "k1", 5), ConfigOption("d", "k2", 1)],
            {("w", "d", "k1"): 1.0, ("w", "d", "k2"): 4.5},
        )
        vp = validate_problem(p)
        _, assignment, _, cost = solve_problem(vp)
        assert assignment.choice["w"] == ("d", "k2")
        assert cost.total == pytest.approx(4.0 + 0.5 * 10.0)

    def test_deadline_squeeze_forces_dearer_config(self):
        # cheap config is too slow for the window
        p = make_problem(
            [WorkflowSpec("w", 0.0, 2.0)],
            [DeviceCatalogEntry("d", 1.0, 1.0, 0.0)],
            [ConfigOption("d", "slow", 1), ConfigOption("d", "fast", 4)],
            {("w", "d", "slow"): 3.0, ("w", "d", "fast"): 1.0},
        )
        vp = validate_problem(p)
        _, assignment, schedule, cost = solve_problem(vp)
        assert assignment.choice["w"] == ("d", "fast")
        assert schedule.finish["w"] <= 2.0 + 1e-9
        assert cost.total == pytest.approx(4.0)

    def test_infeasible_instance(self):
        p = make_problem(
            [WorkflowSpec("w", 0.0, 1.0)],
            [DeviceCatalogEntry("d", 1.0, 1.0, 0.0)],
            [ConfigOption("d", "k", 1)],
            {("w", "d", "k"): 2.0},
        )
        vp = validate_problem(p)
        outcome, assignment, _, _ = solve_problem(vp)
        assert outcome.status == INFEASIBLE
        assert assignment is None

    def test_empty_problem_costs_nothing(self):
        vp = validate_problem(make_problem([], [], [], {}))
        outcome, assignment, schedule, cost = solve_problem(vp)
        assert outcome.status == OPTIMAL
        assert cost.total == 0.0
        assert assignment.choice == {}

    def test_node_limit_status(self):
        cfg = GeneratorConfig(workflow_count=5, device_count=3, configs_per_device=3, seed=11)
        vp = validate_problem(generate_problem(cfg))
        out = solve(build_milp(vp), SolverConfig(node_limit=1))
        assert out.status == "node_limit"

    def test_deterministic(self):
        cfg = GeneratorConfig(workflow_count=5, device_count=2, configs_per_device=3, seed=3)
        vp = validate_problem(generate_problem(cfg))
        a = solve_problem(vp)
        b = solve_problem(vp)
        assert a[0].objective == b[0].objective
        assert a[1].choice == b[1].choice
        assert a[2].start == b[2].start
        assert a[0].report.nodes_explored == b[0].report.nodes_explored

    def test_pruning_never_changes_the_optimum(self):
        for seed in range(8):
            cfg = GeneratorConfig(workflow_count=4, device_count=2, configs_per_device=2, seed=seed)
            vp = validate_problem(generate_problem(cfg))
            model = build_milp(vp)
            pruned = solve(model, SolverConfig(prune=True))
            full = solve(model, SolverConfig(prune=False))
            assert pruned.status == full.status
            if pruned.status == OPTIMAL:
                assert pruned.objective == pytest.approx(full.objective, abs=1e-9)

    def test_bound_never_exceeds_optimum(self):
        cfg = GeneratorConfig(workflow_count=5, device_count=2, configs_per_device=3, seed=21)
        vp = validate_problem(generate_problem(cfg))
        out = solve(build_milp(vp))
        assert out.status == OPTIMAL
        assert out.report.best_bound <= out.objective + 1e-9


class TestExtract:
    def test_schedule_and_cost_verified(self):
        for seed in range(20):
            cfg = GeneratorConfig(seed=seed)
            vp = validate_problem(generate_problem(cfg))
            outcome, assignment, schedule, cost = solve_problem(vp)
            if outcome.status != OPTIMAL:
                continue
            from costplan.core import check_schedule

            assert check_schedule(vp, schedule) == []
            assert cost.total == pytest.approx(evaluate_cost(vp, assignment).total)

    def test_no_incumbent_rejected(self, validated):
        model = build_milp(validated)
        from costplan.solver import SolveOutcome, SolveReport

        empty = SolveOutcome(INFEASIBLE, None, None, SolveReport(0, 0, float("inf"), 0.0))
        with pytest.raises(ValueError):
            extract_solution(model, empty)

    def test_objective_mismatch_raises(self, two_config_problem):
        vp = validate_problem(two_config_problem)
        model = build_milp(vp)
        out = solve(model)
        from costplan.solver import SolveOutcome

        tampered = SolveOutcome(out.status, out.objective + 1.0, out.x, out.report)
        with pytest.raises(InconsistentIncumbent):
            extract_solution(model, tampered)


class TestAgainstBruteForce:
    def test_matches_enumeration(self):
        mismatches = []
        for seed in range(30):
            cfg = GeneratorConfig(
                workflow_count=3 + seed % 3,
                device_count=1 + seed % 2,
                configs_per_device=2 + seed % 2,
                precedence_density=0.2 + 0.1 * (seed % 4),
                seed=seed,
            )
            vp = validate_problem(generate_problem(cfg))
            outcome, _, _, cost = solve_problem(vp)
            ref = brute_force_optimum(vp)
            if outcome.status == INFEASIBLE:
                if ref.status != "infeasible":
                    mismatches.append(seed)
            else:
                if ref.status != "optimal" or abs(cost.total - ref.cost) > 1e-6:
                    mismatches.append(seed)
        assert mismatches == []

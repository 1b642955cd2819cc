import itertools
import math

import numpy as np
import pytest

from costplan.simplex import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    LpRow,
    MalformedLp,
    solve_lp,
)

INF = float("inf")


def vertex_enumeration_optimum(lp: LpProblem):
    """Independent oracle: enumerate all candidate vertices (every choice
    of n active constraints from rows and bounds) and take the best
    feasible one. Requires finite bounds on every variable."""
    n = len(lp.objective)
    c = np.array(lp.objective)
    # collect all constraints as a_i . x (rel) b_i
    cons = []
    for row in lp.rows:
        cons.append((np.array(row.coeffs), row.rel, row.rhs))
    for j, (lo, hi) in enumerate(lp.bounds):
        e = np.zeros(n)
        e[j] = 1.0
        cons.append((e, GE, lo))
        assert math.isfinite(hi)
        cons.append((e, LE, hi))

    def feasible(x):
        for a, rel, b in cons:
            v = float(a @ x)
            if rel == LE and v > b + 1e-7:
                return False
            if rel == GE and v < b - 1e-7:
                return False
            if rel == EQ and abs(v - b) > 1e-7:
                return False
        return True

    best = None
    for combo in itertools.combinations(range(len(cons)), n):
        A = np.array([cons[i][0] for i in combo])
        b = np.array([cons[i][2] for i in combo])
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        x = np.linalg.solve(A, b)
        if feasible(x):
            val = float(c @ x)
            if best is None or val < best:
                best = val
    return best


class TestExamples:
    def test_single_bound_binds(self):
        out = solve_lp(LpProblem((-1.0,), (), ((0.0, 5.0),)))
        assert out.status == OPTIMAL
        assert out.x[0] == pytest.approx(5.0)
        assert out.objective == pytest.approx(-5.0)

    def test_contradictory_rows_infeasible(self):
        lp = LpProblem(
            (0.0,),
            (LpRow((1.0,), GE, 2.0), LpRow((1.0,), LE, 1.0)),
            ((0.0, INF),),
        )
        assert solve_lp(lp).status == INFEASIBLE

    def test_improving_ray_unbounded(self):
        assert solve_lp(LpProblem((-1.0,), (), ((0.0, INF),))).status == UNBOUNDED

    def test_dimension_mismatch_is_hard_error(self):
        with pytest.raises(MalformedLp):
            solve_lp(LpProblem((1.0, 2.0), (LpRow((1.0,), LE, 1.0),), ((0.0, 1.0), (0.0, 1.0))))
        with pytest.raises(MalformedLp):
            solve_lp(LpProblem((1.0,), (), ((2.0, 1.0),)))


def random_bounded_lp(rng, n_max=4, m_max=6):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    rows = tuple(
        LpRow(
            tuple(rng.normal(size=n)),
            str(rng.choice([LE, GE, EQ], p=[0.45, 0.45, 0.1])),
            float(rng.normal()),
        )
        for _ in range(m)
    )
    lo = rng.uniform(-3, 0, size=n)
    hi = lo + rng.uniform(0.5, 5, size=n)
    bounds = tuple((float(l), float(h)) for l, h in zip(lo, hi))
    return LpProblem(tuple(rng.normal(size=n)), rows, bounds)


class TestAgainstVertexOracle:
    def test_random_instances(self):
        rng = np.random.default_rng(1234)
        optimal_seen = 0
        for _ in range(60):
            lp = random_bounded_lp(rng)
            out = solve_lp(lp)
            ref = vertex_enumeration_optimum(lp)
            if ref is None:
                assert out.status == INFEASIBLE
            else:
                assert out.status == OPTIMAL
                assert out.objective == pytest.approx(ref, abs=1e-6)
                optimal_seen += 1
        assert optimal_seen > 10  # the sampler must exercise the optimal path


class TestProperties:
    def test_deterministic_resolve(self):
        rng = np.random.default_rng(7)
        lp = random_bounded_lp(rng)
        a = solve_lp(lp)
        b = solve_lp(lp)
        assert a.status == b.status
        if a.status == OPTIMAL:
            assert a.objective == b.objective
            assert np.array_equal(a.x, b.x)

    def test_objective_scaling(self):
        lp = LpProblem(
            (2.0, 3.0),
            (LpRow((1.0, 1.0), GE, 4.0), LpRow((1.0, -1.0), EQ, 1.0)),
            ((0.0, 10.0), (0.0, 10.0)),
        )
        base = solve_lp(lp)
        scaled = solve_lp(LpProblem((4.0, 6.0), lp.rows, lp.bounds))
        assert scaled.objective == pytest.approx(2 * base.objective)
        assert np.allclose(scaled.x, base.x)

    def test_optimal_solutions_satisfy_rows(self):
        rng = np.random.default_rng(99)
        for _ in range(40):
            lp = random_bounded_lp(rng)
            out = solve_lp(lp)
            if out.status != OPTIMAL:
                continue
            for row in lp.rows:
                v = float(np.dot(row.coeffs, out.x))
                if row.rel == LE:
                    assert v <= row.rhs + 1e-6
                elif row.rel == GE:
                    assert v >= row.rhs - 1e-6
                else:
                    assert v == pytest.approx(row.rhs, abs=1e-6)
            for xj, (lo, hi) in zip(out.x, lp.bounds):
                assert lo - 1e-7 <= xj <= hi + 1e-7

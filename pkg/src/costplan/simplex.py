"""Dense two-phase primal simplex for small linear programs.

Serves as the relaxation engine for branch-and-bound. Minimization only;
variables carry finite lower bounds and optional upper bounds. Pivoting is
Bland's rule (lowest-index eligible variable), which is deterministic and
cycle-free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

LE = "<="
EQ = "="
GE = ">="


class MalformedLp(ValueError):
    """Dimension mismatch or invalid bounds in an LpProblem."""


@dataclass(frozen=True)
class LpRow:
    coeffs: tuple[float, ...]
    rel: str  # one of LE, EQ, GE
    rhs: float


@dataclass(frozen=True)
class LpProblem:
    objective: tuple[float, ...]
    rows: tuple[LpRow, ...]
    bounds: tuple[tuple[float, float], ...]  # (lower, upper); upper may be inf


@dataclass(frozen=True)
class LpOutcome:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None


def _validate(lp: LpProblem) -> None:
    n = len(lp.objective)
    if len(lp.bounds) != n:
        raise MalformedLp(f"{len(lp.bounds)} bounds for {n} variables")
    for row in lp.rows:
        if len(row.coeffs) != n:
            raise MalformedLp(f"row has {len(row.coeffs)} coefficients, expected {n}")
        if row.rel not in (LE, EQ, GE):
            raise MalformedLp(f"unknown relation {row.rel!r}")
    for lo, hi in lp.bounds:
        if not math.isfinite(lo):
            raise MalformedLp("lower bounds must be finite")
        if lo > hi:
            raise MalformedLp(f"bound {lo} > {hi}")


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run_simplex(
    T: np.ndarray,
    basis: np.ndarray,
    cost: np.ndarray,
    eligible: np.ndarray,
    tol: float,
) -> str:
    """Minimize cost over the tableau in place. Returns OPTIMAL or UNBOUNDED.

    ``eligible`` masks columns allowed to enter the basis (used to keep
    artificials out during phase two). Bland's rule throughout.
    """
    m = T.shape[0]
    while True:
        # Reduced costs of the current basis.
        z = cost - cost[basis] @ T[:, :-1]
        entering = -1
        for j in np.flatnonzero(eligible):
            if z[j] < -tol:
                entering = int(j)
                break
        if entering < 0:
            return OPTIMAL
        ratios = []
        for r in range(m):
            a = T[r, entering]
            if a > tol:
                ratios.append((T[r, -1] / a, basis[r], r))
        if not ratios:
            return UNBOUNDED
        # Smallest ratio; ties broken on lowest basis-variable index.
        _, _, leave = min(ratios)
        _pivot(T, basis, leave, entering)


def solve_lp(lp: LpProblem, tol: float = 1e-7) -> LpOutcome:
    """Solve a small dense LP (minimization).

    Optimal outcomes return a basic feasible solution with reduced costs
    >= -tol and row residuals within tol. Infeasible and unbounded are
    outcomes, not errors; the only hard error is MalformedLp.
    """
    _validate(lp)
    n = len(lp.objective)
    c_full = np.asarray(lp.objective, dtype=float)
    lo = np.array([b[0] for b in lp.bounds])
    hi = np.array([b[1] for b in lp.bounds])

    # Substitute out fixed variables and shift the rest to lower bound 0.
    fixed = (hi - lo) <= 1e-12
    free_idx = np.flatnonzero(~fixed)
    nf = len(free_idx)
    c = c_full[free_idx]

    rows_a: list[np.ndarray] = []
    rows_rel: list[str] = []
    rows_b: list[float] = []
    for row in lp.rows:
        a_full = np.asarray(row.coeffs, dtype=float)
        b = row.rhs - float(a_full @ lo)  # both fixed and shifted parts
        rows_a.append(a_full[free_idx])
        rows_rel.append(row.rel)
        rows_b.append(b)
    # Finite upper bounds become rows on the shifted variables.
    for pos, j in enumerate(free_idx):
        if math.isfinite(hi[j]):
            a = np.zeros(nf)
            a[pos] = 1.0
            rows_a.append(a)
            rows_rel.append(LE)
            rows_b.append(hi[j] - lo[j])

    m = len(rows_a)
    if m == 0:
        # Bounds only: each free variable sits at whichever bound minimizes.
        x = np.where(fixed, lo, 0.0)
        for pos, j in enumerate(free_idx):
            if c[pos] < -tol:
                if not math.isfinite(hi[j]):
                    return LpOutcome(UNBOUNDED)
                x[j] = hi[j]
            else:
                x[j] = lo[j]
        return LpOutcome(OPTIMAL, x, float(c_full @ x))

    A = np.vstack(rows_a) if m else np.zeros((0, nf))
    b = np.array(rows_b)

    # Equality standard form: one slack per inequality row, artificials
    # wherever no slack can seed the basis.
    n_slack = sum(1 for r in rows_rel if r != EQ)
    ncols = nf + n_slack
    M = np.zeros((m, ncols))
    M[:, :nf] = A
    slack_col: list[int] = []
    si = nf
    for r, rel in enumerate(rows_rel):
        if rel == EQ:
            slack_col.append(-1)
            continue
        M[r, si] = 1.0 if rel == LE else -1.0
        slack_col.append(si)
        si += 1
    neg = b < 0
    M[neg] *= -1.0
    b = np.abs(b)

    basis = np.empty(m, dtype=int)
    art_rows: list[int] = []
    for r in range(m):
        sc = slack_col[r]
        if sc >= 0 and M[r, sc] == 1.0:
            basis[r] = sc
        else:
            art_rows.append(r)
    n_art = len(art_rows)
    T = np.hstack([M, np.zeros((m, n_art)), b.reshape(-1, 1)])
    for k, r in enumerate(art_rows):
        T[r, ncols + k] = 1.0
        basis[r] = ncols + k

    total = ncols + n_art
    if n_art:
        cost1 = np.zeros(total)
        cost1[ncols:] = 1.0
        eligible = np.ones(total, dtype=bool)
        _run_simplex(T, basis, cost1, eligible, tol)
        z1 = cost1 - cost1[basis] @ T[:, :-1]
        phase1 = float(cost1[basis] @ T[:, -1])
        if phase1 > tol:
            return LpOutcome(INFEASIBLE)
        # Drive remaining artificials out of the basis; rows that cannot
        # pivot on a structural column are redundant and dropped.
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= ncols:
                piv = -1
                for j in range(ncols):
                    if abs(T[r, j]) > tol:
                        piv = j
                        break
                if piv >= 0:
                    _pivot(T, basis, r, piv)
                else:
                    keep[r] = False
        if not keep.all():
            T = T[keep]
            basis = basis[keep]
            m = T.shape[0]

    cost2 = np.zeros(total)
    cost2[:nf] = c
    eligible = np.zeros(total, dtype=bool)
    eligible[:ncols] = True
    status = _run_simplex(T, basis, cost2, eligible, tol)
    if status == UNBOUNDED:
        return LpOutcome(UNBOUNDED)

    xs = np.zeros(total)
    xs[basis] = T[:, -1]
    x = np.where(fixed, lo, 0.0)
    x[free_idx] = xs[:nf] + lo[free_idx]
    return LpOutcome(OPTIMAL, x, float(c_full @ x))

"""Synthetic instances, run-record generation and experiment harnesses.

Provides seeded generators for optimization instances and run-record
datasets (with planted linear ground truth), an exhaustive brute-force
optimum used as an independent oracle for the branch-and-bound solver,
and the Monte-Carlo outlier-robustness experiment comparing ridge and
lasso stability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import (
    Assignment,
    ConfigOption,
    DeviceCatalogEntry,
    DurationTable,
    InfeasibleSchedule,
    Problem,
    ValidatedProblem,
    WorkflowSpec,
    earliest_schedule,
    evaluate_cost,
    validate_problem,
)
from .predictor import (
    DEFAULT_NUMERIC_FEATURES,
    DurationRegressor,
    FeatureSchema,
    RunRecord,
    tune_alpha,
)


@dataclass(frozen=True)
class GeneratorConfig:
    workflow_count: int = 4
    device_count: int = 2
    configs_per_device: int = 2
    precedence_density: float = 0.3
    window_slack_factor: float = 2.0
    base_rate_range: tuple[float, float] = (0.5, 2.0)
    overflow_factor_range: tuple[float, float] = (1.2, 3.0)
    prepurchased_range: tuple[float, float] = (0.0, 12.0)
    duration_range: tuple[float, float] = (0.5, 4.0)
    device_count_range: tuple[int, int] = (1, 3)
    seed: int = 0

    def __post_init__(self):
        if min(self.workflow_count, self.device_count, self.configs_per_device) < 1:
            raise ValueError("counts must be >= 1")
        if not (0.0 <= self.precedence_density <= 1.0):
            raise ValueError("precedence_density must be in [0, 1]")
        if self.window_slack_factor < 1.0:
            raise ValueError("window_slack_factor must be >= 1")


def generate_problem(cfg: GeneratorConfig) -> Problem:
    """Deterministic random instance with at least one feasible assignment.

    Precedence is sampled over the id order only, so the graph is acyclic
    by construction. Each deadline is set from the earliest schedule under
    the per-workflow cheapest-duration choice, widened by the slack
    factor, so that choice always stays feasible.
    """
    rng = np.random.default_rng(cfg.seed)
    cpu_menu = [2, 4, 8, 16, 32]

    devices = []
    configs = []
    for di in range(cfg.device_count):
        did = f"d{di:02d}"
        base = rng.uniform(*cfg.base_rate_range)
        devices.append(
            DeviceCatalogEntry(
                id=did,
                base_rate=round(base, 4),
                overflow_rate=round(base * rng.uniform(*cfg.overflow_factor_range), 4),
                prepurchased_hours=round(rng.uniform(*cfg.prepurchased_range), 4),
            )
        )
        for ki in range(cfg.configs_per_device):
            cpu = cpu_menu[int(rng.integers(0, len(cpu_menu)))]
            configs.append(
                ConfigOption(
                    device_id=did,
                    config_id=f"k{ki}",
                    device_count=int(rng.integers(cfg.device_count_range[0], cfg.device_count_range[1] + 1)),
                    cpu_cores=float(cpu),
                    memory_gb=float(cpu * 4),
                )
            )

    wids = [f"w{wi:03d}" for wi in range(cfg.workflow_count)]
    entries: dict[tuple[str, str, str], float] = {}
    for wid in wids:
        for c in configs:
            entries[(wid, c.device_id, c.config_id)] = round(
                float(rng.uniform(*cfg.duration_range)), 4
            )
    durations = DurationTable(entries)

    precedence: set[tuple[str, str]] = set()
    for a in range(cfg.workflow_count):
        for b in range(a + 1, cfg.workflow_count):
            if rng.random() < cfg.precedence_density:
                precedence.add((wids[a], wids[b]))

    earliest = {wid: round(float(rng.uniform(0.0, 2.0)), 4) for wid in wids}

    # Earliest schedule under the cheapest-duration choice, used to place
    # windows that keep at least that assignment feasible.
    cheapest: dict[str, tuple[str, str]] = {}
    for wid in wids:
        best = min(
            ((entries[(wid, c.device_id, c.config_id)], c.device_id, c.config_id) for c in configs)
        )
        cheapest[wid] = (best[1], best[2])
    preds: dict[str, list[str]] = {wid: [] for wid in wids}
    for i, j in precedence:
        preds[j].append(i)
    finish: dict[str, float] = {}
    workflows = []
    for wid in wids:  # id order is a topological order by construction
        did, kid = cheapest[wid]
        s = max([earliest[wid]] + [finish[p] for p in preds[wid]])
        t = s + entries[(wid, did, kid)]
        finish[wid] = t
        # Round up so the cheapest choice stays feasible even at slack 1.0.
        deadline = math.ceil(
            (earliest[wid] + cfg.window_slack_factor * (t - earliest[wid])) * 10_000
        ) / 10_000
        workflows.append(
            WorkflowSpec(
                id=wid,
                earliest_start=earliest[wid],
                deadline=max(deadline, t),
                predecessors=frozenset(preds[wid]),
                features={
                    "parallelism": int(rng.integers(1, 17)),
                    "subtask_count": int(rng.integers(1, 51)),
                    "table_count": int(rng.integers(1, 21)),
                    "code_length": int(rng.integers(100, 20001)),
                    "dataset_volume_gb": round(float(rng.uniform(0.5, 40.0)), 4),
                    "disk_volume_gb": round(float(rng.uniform(0.5, 50.0)), 4),
                    "task_type": "io_intensive" if rng.random() < 0.5 else "compute_intensive",
                },
            )
        )

    return Problem.build(workflows, devices, configs, durations, precedence=frozenset(precedence))


class TooLarge(ValueError):
    """Assignment enumeration would exceed the brute-force guard."""


@dataclass(frozen=True)
class BruteForceResult:
    status: str  # "optimal" | "infeasible"
    cost: float | None = None
    assignment: Assignment | None = None
    enumerated: int = 0


def brute_force_optimum(vp: ValidatedProblem, guard: int = 10**6) -> BruteForceResult:
    """Exhaustive oracle: enumerate every assignment, keep the feasible
    ones (earliest-start scheduling decides feasibility; cost is
    timing-independent) and return the cheapest. Ties resolve to the
    lexicographically smallest assignment."""
    wids = sorted(vp.workflow_by_id)
    sizes = [len(vp.choices_by_workflow[wid]) for wid in wids]
    total = math.prod(sizes) if sizes else 1
    if total > guard:
        raise TooLarge(f"{total} assignments exceeds guard {guard}")

    best_cost = math.inf
    best_assignment: Assignment | None = None
    count = 0

    def enumerate_from(i: int, choice: dict[str, tuple[str, str]]) -> None:
        nonlocal best_cost, best_assignment, count
        if i == len(wids):
            count += 1
            a = Assignment(dict(choice))
            try:
                earliest_schedule(vp, a)
            except InfeasibleSchedule:
                return
            c = evaluate_cost(vp, a).total
            if c < best_cost - 1e-12:
                best_cost = c
                best_assignment = a
            return
        for opt in vp.choices_by_workflow[wids[i]]:
            choice[wids[i]] = opt
            enumerate_from(i + 1, choice)
        del choice[wids[i]]

    if wids:
        enumerate_from(0, {})
    else:
        count = 1
        best_cost = 0.0
        best_assignment = Assignment({})

    if best_assignment is None:
        return BruteForceResult("infeasible", enumerated=count)
    return BruteForceResult("optimal", best_cost, best_assignment, enumerated=count)


@dataclass(frozen=True)
class RecordConfig:
    n: int = 5000
    noise_sigma: float = 60.0
    seed: int = 0


@dataclass(frozen=True)
class PlantedTruth:
    intercept: float
    coefficients: dict[str, float]

    def predict(self, record: RunRecord) -> float:
        return self.intercept + sum(
            coef * float(getattr(record, name)) for name, coef in self.coefficients.items()
        )


# Planted linear model over the numeric features. memory_gb tracks
# cpu_cores and disk_volume_gb tracks dataset_volume_gb (with jitter), so
# the design carries strong collinearity on purpose.
_PLANTED = PlantedTruth(
    intercept=120.0,
    coefficients={
        "cpu_cores": -2.0,
        "memory_gb": -0.5,
        "parallelism": 3.0,
        "subtask_count": 15.0,
        "table_count": 0.8,
        "code_length": 0.004,
        "dataset_volume_gb": 2.5,
        "disk_volume_gb": 8.0,
    },
)


def generate_records(cfg: RecordConfig) -> tuple[list[RunRecord], PlantedTruth]:
    """Seeded run records whose durations follow a planted linear model
    plus Gaussian noise, floored at one second."""
    rng = np.random.default_rng(cfg.seed)
    cpu_menu = np.array([2, 4, 8, 16, 32])
    records: list[RunRecord] = []
    for i in range(cfg.n):
        cpu = int(cpu_menu[rng.integers(0, len(cpu_menu))])
        memory = cpu * 4 * (1.0 + rng.uniform(-0.1, 0.1))
        dataset = float(rng.uniform(0.5, 40.0))
        disk = dataset * 1.2 * (1.0 + rng.uniform(-0.05, 0.05))
        rec = RunRecord(
            job_id=f"job{i:06d}",
            cpu_cores=cpu,
            memory_gb=round(memory, 4),
            parallelism=int(rng.integers(1, 17)),
            subtask_count=int(rng.integers(1, 51)),
            table_count=int(rng.integers(1, 21)),
            code_length=int(rng.integers(100, 20001)),
            dataset_volume_gb=round(dataset, 4),
            disk_volume_gb=round(disk, 4),
            task_type="io_intensive" if rng.random() < 0.5 else "compute_intensive",
            observed_duration_s=1.0,
        )
        clean = _PLANTED.predict(rec)
        noisy = clean + float(rng.normal(0.0, cfg.noise_sigma)) if cfg.noise_sigma > 0 else clean
        records.append(
            RunRecord(
                **{
                    **rec.__dict__,
                    "observed_duration_s": max(noisy, 1.0),
                }
            )
        )
    return records, _PLANTED


@dataclass(frozen=True)
class RobustnessReport:
    trials: int
    outlier_fraction: float
    ridge_alpha: float
    lasso_alpha: float
    ridge_mae_spread: float
    lasso_mae_spread: float
    ridge_maes: tuple[float, ...] = ()
    lasso_maes: tuple[float, ...] = ()


def _spread(values: np.ndarray) -> float:
    med = float(np.median(values))
    if med == 0.0:
        return 0.0
    return float((values.max() - values.min()) / med)


def robustness_trial(
    cfg: RecordConfig = RecordConfig(),
    trials: int = 50,
    outlier_fraction: float = 0.05,
    holdout_fraction: float = 0.2,
    folds: int = 5,
) -> RobustnessReport:
    """Monte-Carlo outlier experiment.

    Each trial corrupts a seeded fraction of the training durations with a
    x10 multiplier, refits ridge and lasso at their CV-tuned penalties and
    records held-out MAE; the reported spread per family is
    (max - min) / median across trials.
    """
    if trials < 10:
        raise ValueError("trials must be >= 10")
    records, _ = generate_records(cfg)
    schema = FeatureSchema(numeric=DEFAULT_NUMERIC_FEATURES, categorical={})
    X = np.array([schema.encode(r) for r in records])
    y = np.array([r.observed_duration_s for r in records])
    n_hold = max(1, int(len(records) * holdout_fraction))
    X_tr, y_tr = X[:-n_hold], y[:-n_hold]
    X_ho, y_ho = X[-n_hold:], y[-n_hold:]

    ridge_alpha = tune_alpha(X_tr, y_tr, family="ridge", folds=folds).best_alpha
    lasso_alpha = tune_alpha(X_tr, y_tr, family="lasso", folds=folds).best_alpha

    n_out = int(round(outlier_fraction * len(y_tr)))
    ridge_maes = []
    lasso_maes = []
    for t in range(trials):
        rng = np.random.default_rng((cfg.seed, t))
        y_c = y_tr.copy()
        if n_out:
            idx = rng.choice(len(y_tr), size=n_out, replace=False)
            y_c[idx] *= 10.0
        for family, alpha, sink in (
            ("ridge", ridge_alpha, ridge_maes),
            ("lasso", lasso_alpha, lasso_maes),
        ):
            m = DurationRegressor(family=family, alpha=alpha).fit(X_tr, y_c)
            sink.append(float(np.mean(np.abs(m.predict(X_ho) - y_ho))))

    return RobustnessReport(
        trials=trials,
        outlier_fraction=outlier_fraction,
        ridge_alpha=ridge_alpha,
        lasso_alpha=lasso_alpha,
        ridge_mae_spread=_spread(np.array(ridge_maes)),
        lasso_mae_spread=_spread(np.array(lasso_maes)),
        ridge_maes=tuple(ridge_maes),
        lasso_maes=tuple(lasso_maes),
    )

"""Duration prediction from historical run records.

Feature encoding for run records, a linear-family regressor (OLS, ridge,
lasso, elastic net) in scikit-learn estimator style, regression metrics,
penalty tuning by coarse/fine grid search under k-fold cross-validation,
feature/duration correlation analysis, and duration-table construction
for optimization instances.

Ridge is solved in closed form on z-scored features with an unpenalized
intercept; lasso and elastic net use cyclic coordinate descent on the
Gram matrix. The penalized objective is

    ||y - Z w - b||^2 + alpha * ((1 - l1_ratio) ||w||_2^2 + l1_ratio ||w||_1)

so l1_ratio=0 recovers ridge and l1_ratio=1 recovers lasso.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .core import ConfigOption, DurationTable

TASK_TYPES = ("io_intensive", "compute_intensive")

DEFAULT_NUMERIC_FEATURES = (
    "cpu_cores",
    "memory_gb",
    "parallelism",
    "subtask_count",
    "table_count",
    "code_length",
    "dataset_volume_gb",
    "disk_volume_gb",
)


class MissingFeature(KeyError):
    def __init__(self, name: str):
        self.feature = name
        super().__init__(name)


class ArityMismatch(ValueError):
    pass


class DegenerateDesign(ValueError):
    """OLS requested on a rank-deficient design."""


class TooFewSamples(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    job_id: str
    cpu_cores: int
    memory_gb: float
    parallelism: int
    subtask_count: int
    table_count: int
    code_length: int
    dataset_volume_gb: float
    disk_volume_gb: float
    task_type: str
    observed_duration_s: float


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature layout: numeric passthrough columns followed by
    one-hot groups for each categorical feature."""

    numeric: tuple[str, ...] = DEFAULT_NUMERIC_FEATURES
    categorical: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: {"task_type": TASK_TYPES}
    )

    @property
    def names(self) -> tuple[str, ...]:
        out = list(self.numeric)
        for feat, levels in self.categorical.items():
            out.extend(f"{feat}={lvl}" for lvl in levels)
        return tuple(out)

    @property
    def arity(self) -> int:
        return len(self.numeric) + sum(len(v) for v in self.categorical.values())

    def encode(self, record) -> np.ndarray:
        """Encode a RunRecord (or mapping) into a vector in schema order."""
        def get(name: str):
            if isinstance(record, Mapping):
                if name not in record or record[name] is None:
                    raise MissingFeature(name)
                return record[name]
            value = getattr(record, name, None)
            if value is None:
                raise MissingFeature(name)
            return value

        values = [float(get(name)) for name in self.numeric]
        for feat, levels in self.categorical.items():
            value = get(feat)
            if value not in levels:
                raise MissingFeature(f"{feat}={value}")
            values.extend(1.0 if value == lvl else 0.0 for lvl in levels)
        return np.asarray(values)


def extract_features(record, schema: FeatureSchema | None = None) -> np.ndarray:
    return (schema or FeatureSchema()).encode(record)


def encode_records(records: Sequence, schema: FeatureSchema | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack records into a design matrix and duration target vector."""
    schema = schema or FeatureSchema()
    X = np.array([schema.encode(r) for r in records])
    y = np.array([float(r.observed_duration_s) for r in records])
    return X, y


@numba.njit(cache=True)
def _coordinate_descent(G, q, denom, thresh, max_iter, tol):
    """Cyclic soft-threshold updates until the largest coefficient change
    in a sweep drops below tol."""
    p = G.shape[0]
    w = np.zeros(p)
    Gw = np.zeros(p)
    for _ in range(max_iter):
        delta_max = 0.0
        for j in range(p):
            rho = q[j] - Gw[j] + G[j, j] * w[j]
            mag = abs(rho) - thresh
            wj = 0.0
            if mag > 0.0:
                wj = mag / denom[j] if rho > 0.0 else -mag / denom[j]
            d = wj - w[j]
            if d != 0.0:
                for k in range(p):
                    Gw[k] += G[k, j] * d
                w[j] = wj
                if abs(d) > delta_max:
                    delta_max = abs(d)
        if delta_max < tol:
            break
    return w


class DurationRegressor(BaseEstimator, RegressorMixin):
    """Linear-family duration model on z-scored features.

    Parameters
    ----------
    family : "ols", "ridge", "lasso" or "elastic_net".
    alpha : penalty weight; must be 0 for OLS.
    l1_ratio : L1 share of the penalty, elastic net only.
    floor : lower clamp on predictions, in seconds.
    """

    def __init__(
        self,
        family: str = "ridge",
        alpha: float = 1.0,
        l1_ratio: float = 0.5,
        floor: float = 1.0,
        tol: float = 1e-8,
        max_iter: int = 10_000,
    ):
        self.family = family
        self.alpha = alpha
        self.l1_ratio = l1_ratio
        self.floor = floor
        self.tol = tol
        self.max_iter = max_iter

    def _effective(self) -> tuple[float, float]:
        if self.family == "ols":
            # OLS is the alpha=0 member of the family; the penalty weight
            # is ignored and recorded as 0 on the fitted model.
            return 0.0, 0.0
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.family == "ridge":
            return float(self.alpha), 0.0
        if self.family == "lasso":
            return float(self.alpha), 1.0
        if self.family == "elastic_net":
            if not (0.0 <= self.l1_ratio <= 1.0):
                raise ValueError("l1_ratio must be in [0, 1]")
            return float(self.alpha), float(self.l1_ratio)
        raise ValueError(f"unknown family {self.family!r}")

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-dimensional")
        if X.shape[0] != y.shape[0]:
            raise ArityMismatch(f"{X.shape[0]} rows vs {y.shape[0]} targets")
        n, p = X.shape
        if n < 2:
            raise TooFewSamples("need at least 2 samples")
        alpha, l1_ratio = self._effective()

        mean = X.mean(axis=0)
        std = X.std(axis=0)
        active = std > 0.0
        std_safe = np.where(active, std, 1.0)
        Z = (X - mean) / std_safe
        Za = Z[:, active]
        ybar = float(y.mean())
        yc = y - ybar

        w_active = self._solve(Za, yc, alpha, l1_ratio)
        coef = np.zeros(p)
        coef[active] = w_active

        self.coef_ = coef
        self.intercept_ = ybar
        self.alpha_ = alpha
        self.l1_ratio_ = l1_ratio
        self.feature_means_ = mean
        self.feature_stds_ = std_safe
        self.active_ = active
        self.n_features_in_ = p
        return self

    def _solve(self, Z: np.ndarray, yc: np.ndarray, alpha: float, l1_ratio: float) -> np.ndarray:
        p = Z.shape[1]
        if p == 0:
            return np.zeros(0)
        G = Z.T @ Z
        q = Z.T @ yc
        if l1_ratio == 0.0:
            if alpha == 0.0 and np.linalg.matrix_rank(Z) < p:
                raise DegenerateDesign("rank-deficient design; use ridge (alpha > 0)")
            return np.linalg.solve(G + alpha * np.eye(p), q)
        # Cyclic coordinate descent on the Gram matrix.
        ridge_part = alpha * (1.0 - l1_ratio)
        thresh = alpha * l1_ratio / 2.0
        denom = np.diag(G).copy() + ridge_part
        return _coordinate_descent(G, q, denom, thresh, self.max_iter, self.tol)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        one = X.ndim == 1
        if one:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in_:
            raise ArityMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        Z = (X - self.feature_means_) / self.feature_stds_
        raw = Z @ self.coef_ + self.intercept_
        out = np.maximum(raw, self.floor)
        return out[0] if one else out


@dataclass(frozen=True)
class RegressionMetrics:
    mae: float
    mse: float
    rmse: float
    mape: float | None
    n: int

    @property
    def mape_defined(self) -> bool:
        return self.mape is not None


def regression_metrics(y_true, y_pred) -> RegressionMetrics:
    """MAE / MSE / RMSE in seconds(^2), MAPE in percent over positive
    targets only (None when no positive target exists)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ArityMismatch("y_true and y_pred must be equal-length vectors")
    if len(y_true) < 1:
        raise TooFewSamples("need at least 1 sample")
    err = y_true - y_pred
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err**2))
    pos = y_true > 0
    mape = float(np.mean(np.abs(err[pos] / y_true[pos])) * 100.0) if pos.any() else None
    return RegressionMetrics(mae=mae, mse=mse, rmse=math.sqrt(mse), mape=mape, n=len(y_true))


def evaluate(model: DurationRegressor, X, y) -> RegressionMetrics:
    return regression_metrics(y, model.predict(X))


@dataclass(frozen=True)
class TuneResult:
    best_alpha: float
    cv_score_by_alpha: Mapping[float, float]
    folds: int


def _cv_mae(split_folds, family: str, alpha: float, l1_ratio: float) -> float:
    maes = []
    for X_tr, y_tr, X_val, y_val in split_folds:
        model = DurationRegressor(family=family, alpha=alpha, l1_ratio=l1_ratio)
        model.fit(X_tr, y_tr)
        maes.append(float(np.mean(np.abs(model.predict(X_val) - y_val))))
    return float(np.mean(maes))


def tune_alpha(
    X,
    y,
    family: str = "ridge",
    l1_ratio: float = 0.5,
    folds: int = 5,
    coarse_grid: Sequence[float] = (0.01, 0.1, 1.0, 10.0),
    fine_step: float = 0.01,
    shuffle_seed: int | None = None,
) -> TuneResult:
    """Two-phase penalty search scored by mean cross-validated MAE.

    Phase one scans the decade grid; phase two scans linearly at
    ``fine_step`` over [best/10, best*10] clipped to [0.01, 10]. Fold
    assignment is sample index mod ``folds`` (deterministic) unless a
    shuffle seed is given. Score ties resolve toward the smaller penalty.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < folds:
        raise TooFewSamples(f"need at least {folds} samples for {folds}-fold CV")
    fold_of = np.arange(n) % folds
    if shuffle_seed is not None:
        fold_of = np.random.default_rng(shuffle_seed).permutation(fold_of)
    split_folds = []
    for f in range(folds):
        val = fold_of == f
        split_folds.append((X[~val], y[~val], X[val], y[val]))

    scores: dict[float, float] = {}

    def score(alpha: float) -> float:
        if alpha not in scores:
            scores[alpha] = _cv_mae(split_folds, family, alpha, l1_ratio)
        return scores[alpha]

    best = None
    for alpha in coarse_grid:
        s = score(float(alpha))
        if best is None or s < best[1]:
            best = (float(alpha), s)

    # Fine scan in integer multiples of the step to avoid float drift.
    steps_per_unit = round(1.0 / fine_step)
    lo = max(round(best[0] / 10 * steps_per_unit), round(0.01 * steps_per_unit))
    hi = min(round(best[0] * 10 * steps_per_unit), round(10.0 * steps_per_unit))
    for k in range(lo, hi + 1):
        alpha = k / steps_per_unit
        s = score(alpha)
        if s < best[1]:
            best = (alpha, s)

    return TuneResult(best_alpha=best[0], cv_score_by_alpha=scores, folds=folds)


@dataclass(frozen=True)
class FeatureCorrelation:
    name: str
    r: float
    degenerate: bool = False


def correlations(records: Sequence, schema: FeatureSchema | None = None) -> list[FeatureCorrelation]:
    """Product-moment correlation of each encoded feature with observed
    duration, sorted by |r| descending (ties by name). Constant features
    report r=0 with a degenerate flag."""
    if len(records) < 2:
        raise TooFewSamples("need at least 2 samples")
    schema = schema or FeatureSchema()
    X, y = encode_records(records, schema)
    out = []
    y_sd = y.std()
    for j, name in enumerate(schema.names):
        col = X[:, j]
        if col.std() == 0.0 or y_sd == 0.0:
            out.append(FeatureCorrelation(name, 0.0, degenerate=True))
            continue
        r = float(np.corrcoef(col, y)[0, 1])
        out.append(FeatureCorrelation(name, r))
    out.sort(key=lambda fc: (-abs(fc.r), fc.name))
    return out


def build_duration_table(
    model: DurationRegressor,
    schema: FeatureSchema,
    workflow_ids: Sequence[str],
    configs: Sequence[ConfigOption],
    static_features: Mapping[str, Mapping[str, object]],
) -> DurationTable:
    """Predict an execution-hours entry for every (workflow, config).

    A config contributes cpu_cores and memory_gb scaled by its device
    count; the remaining features come from the workflow's static feature
    map. Predictions are in seconds, floored at the model floor, then
    converted to hours.
    """
    entries: dict[tuple[str, str, str], float] = {}
    for wid in workflow_ids:
        if wid not in static_features:
            raise MissingFeature(f"static features for workflow {wid!r}")
        base = dict(static_features[wid])
        for cfg in configs:
            if cfg.cpu_cores is None or cfg.memory_gb is None:
                raise MissingFeature(
                    f"config ({cfg.device_id}, {cfg.config_id}) lacks cpu_cores/memory_gb"
                )
            feats = dict(base)
            feats["cpu_cores"] = cfg.device_count * cfg.cpu_cores
            feats["memory_gb"] = cfg.device_count * cfg.memory_gb
            seconds = float(model.predict(schema.encode(feats)))
            entries[(wid, cfg.device_id, cfg.config_id)] = max(seconds, model.floor) / 3600.0
    return DurationTable(entries)

"""Experiment harness: (n, m, alpha) sweeps and scaling-law regressions.

A sweep runs a grid of cells; each cell draws fresh train / calibration /
test data with a seed derived from (master_seed, method, n, m,
alpha_index, trial) through a counter-based split, so cells are
independent, order-free, and reproducible under any parallel schedule.

Per cell: train the quantile model(s) with mini-batch SGD (learning rate
tuned by successive halving unless a rate is pinned), or load the exact
oracle parameters in ``oracle-theta`` mode; calibrate on the calibration
scores; then measure on the test points

* ``delta``: mean |produced interval length - oracle interval length|
  (the empty interval has length 0), averaged over test points; cell
  aggregation later averages over trials;
* ``coverage``: fraction of test labels inside their interval;
* ``mean_length`` and the calibrated threshold ``q_hat``.

Cells whose (m, alpha) make the conformal index infeasible are skipped
with a recorded reason.

Fits are ordinary least squares on log-transformed axes: slope of
log(delta) against log(n) per alpha, regression of the per-alpha
intercepts against log(alpha), and a pooled fit of log(delta) against
log(1 / (n alpha^2)) for small alpha.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import conformal, synthdata
from .bounds import classify_regime
from .conformal import CalibrationInfeasibleError, CqrModelPair
from .core import Dataset, LinearQuantileModel
from .optimizer import Schedule, SgdConfig, sgd_train, successive_halving_tune
from .synthdata import SyntheticSpec

__all__ = [
    "SweepPlan",
    "ExperimentRecord",
    "SkippedCell",
    "SweepResult",
    "FitResult",
    "DEFAULT_TUNE_GRID",
    "log_spaced_ints",
    "cell_seed_sequence",
    "run_cell",
    "run_sweep",
    "fit_loglog",
    "slope_vs_n",
    "intercepts_vs_alpha",
    "slope_vs_inv_nalpha2",
    "crossing_rate",
]

_METHOD_CODES = {"cqr": 0, "cmr": 1}

DEFAULT_TUNE_GRID = tuple(float(c) for c in np.geomspace(1e-5, 1.0, 17))


def log_spaced_ints(lo: int, hi: int, count: int) -> tuple[int, ...]:
    """Distinct integers, roughly log-uniform between lo and hi inclusive."""
    vals = np.rint(np.geomspace(lo, hi, count)).astype(int)
    return tuple(sorted(set(int(v) for v in vals)))


@dataclass(frozen=True)
class SweepPlan:
    """Grid specification for one sweep."""

    method: str = "cqr"
    n_grid: tuple[int, ...] = log_spaced_ints(200, 20000, 8)
    m_grid: tuple[int, ...] = (5000,)
    alpha_grid: tuple[float, ...] = (0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2)
    trials: int = 20
    test_size: int = 2000
    master_seed: int = 0
    oracle_mode: str = "trained"
    batch_size: int = 64
    epochs: int = 10
    projection_radius: float | None = None
    rate: float | None = None
    tune_grid: tuple[float, ...] = DEFAULT_TUNE_GRID
    schedule_kind: str = "constant"

    def __post_init__(self):
        if self.method not in _METHOD_CODES:
            raise ValueError(f"method must be one of {sorted(_METHOD_CODES)}")
        if self.oracle_mode not in ("trained", "oracle-theta"):
            raise ValueError("oracle_mode must be 'trained' or 'oracle-theta'")
        if self.schedule_kind not in ("constant", "inverse-time"):
            raise ValueError("schedule_kind must be 'constant' or 'inverse-time'")
        for name in ("n_grid", "m_grid", "alpha_grid"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if self.trials < 1 or self.test_size < 1:
            raise ValueError("trials and test_size must be >= 1")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "tune_grid", tuple(float(c) for c in self.tune_grid))

    def cells(self) -> list[tuple[int, int, int, int]]:
        return [
            (n, m, ai, t)
            for n in self.n_grid
            for m in self.m_grid
            for ai in range(len(self.alpha_grid))
            for t in range(self.trials)
        ]


@dataclass(frozen=True)
class ExperimentRecord:
    """Measurements of one (n, m, alpha, trial) cell."""

    method: str
    n: int
    m: int
    alpha: float
    trial: int
    delta: float
    coverage: float
    mean_length: float
    q_hat: float
    regime: str
    seed: int

    def __post_init__(self):
        if self.delta < 0 or not (0.0 <= self.coverage <= 1.0):
            raise ValueError("delta must be >= 0 and coverage in [0, 1]")


@dataclass(frozen=True)
class SkippedCell:
    n: int
    m: int
    alpha: float
    trial: int
    reason: str


@dataclass(frozen=True)
class SweepResult:
    records: tuple[ExperimentRecord, ...]
    skipped: tuple[SkippedCell, ...]


@dataclass(frozen=True)
class FitResult:
    """Ordinary-least-squares line fit summary."""

    slope: float
    intercept: float
    r_squared: float
    point_count: int

    def __post_init__(self):
        if self.point_count < 2:
            raise ValueError("a line fit needs at least 2 points")
        if not (-1e-12 <= self.r_squared <= 1 + 1e-12):
            raise ValueError("r_squared must lie in [0, 1]")


def cell_seed_sequence(
    master_seed: int, method: str, n: int, m: int, alpha_index: int, trial: int
) -> np.random.SeedSequence:
    """Counter-based per-cell seed derivation; order-independent by design."""
    return np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=(_METHOD_CODES[method], int(n), int(m), int(alpha_index), int(trial)),
    )


def _train_model(
    train: Dataset, gamma: float, plan: SweepPlan, tune_ss, fit_ss
) -> LinearQuantileModel:
    if plan.rate is not None:
        rate = plan.rate
    else:
        tune_seed = int(tune_ss.generate_state(1)[0])
        rate = successive_halving_tune(
            train,
            gamma,
            plan.tune_grid,
            budget=len(train),
            seed=tune_seed,
            batch_size=plan.batch_size,
            epochs=plan.epochs,
            projection_radius=plan.projection_radius,
            schedule_kind=plan.schedule_kind,
        )
    cfg = SgdConfig(
        schedule=Schedule(plan.schedule_kind, rate),
        batch_size=plan.batch_size,
        epochs=plan.epochs,
        projection_radius=plan.projection_radius,
        seed=int(fit_ss.generate_state(1)[0]),
    )
    report = sgd_train(train, gamma, cfg)
    return LinearQuantileModel(report.final_theta, gamma)


def run_cell(
    spec: SyntheticSpec, plan: SweepPlan, n: int, m: int, alpha_index: int, trial: int
) -> ExperimentRecord:
    """Run one full pipeline cell; raises CalibrationInfeasibleError if
    (m, alpha) cannot be calibrated."""
    alpha = plan.alpha_grid[alpha_index]
    conformal.conformal_quantile_index(m, alpha)  # fail fast before any work
    root = cell_seed_sequence(plan.master_seed, plan.method, n, m, alpha_index, trial)
    ss_train, ss_cal, ss_test, ss_tune_a, ss_fit_a, ss_tune_b, ss_fit_b = root.spawn(7)

    cal = synthdata.sample(spec, m, ss_cal)
    test = synthdata.sample(spec, plan.test_size, ss_test)

    if plan.method == "cqr":
        if plan.oracle_mode == "oracle-theta":
            lower = LinearQuantileModel(synthdata.oracle_theta(spec, alpha / 2), alpha / 2)
            upper = LinearQuantileModel(synthdata.oracle_theta(spec, 1 - alpha / 2), 1 - alpha / 2)
        else:
            train = synthdata.sample(spec, n, ss_train)
            lower = _train_model(train, alpha / 2, plan, ss_tune_a, ss_fit_a)
            upper = _train_model(train, 1 - alpha / 2, plan, ss_tune_b, ss_fit_b)
        pair = CqrModelPair(lower, upper, alpha)
        scores = conformal.cqr_scores(pair, cal.x, cal.y)
        result = conformal.calibrate(scores, alpha)
        lo, hi, empty = conformal.cqr_interval_bounds(pair, result.q_hat, test.x)
    else:
        if plan.oracle_mode == "oracle-theta":
            median = LinearQuantileModel(synthdata.oracle_theta(spec, 0.5), 0.5)
        else:
            train = synthdata.sample(spec, n, ss_train)
            median = _train_model(train, 0.5, plan, ss_tune_a, ss_fit_a)
        scores = conformal.cmr_scores(median, cal.x, cal.y)
        result = conformal.calibrate(scores, alpha)
        lo, hi, empty = conformal.cmr_interval_bounds(median, result.q_hat, test.x)

    oracle = synthdata.oracle_interval_lengths(spec, test.x, alpha)
    delta = conformal.length_deviation_from_bounds(lo, hi, empty, oracle)
    cov = conformal.coverage_from_bounds(lo, hi, empty, test.y)
    mean_length = float(np.mean(conformal.interval_lengths(lo, hi, empty)))
    return ExperimentRecord(
        method=plan.method,
        n=n,
        m=m,
        alpha=alpha,
        trial=trial,
        delta=delta,
        coverage=cov,
        mean_length=mean_length,
        q_hat=result.q_hat,
        regime=classify_regime(n, m, alpha),
        seed=int(root.generate_state(1, dtype=np.uint64)[0]),
    )


def _run_cell_args(args) -> ExperimentRecord | SkippedCell:
    spec, plan, (n, m, ai, t) = args
    try:
        return run_cell(spec, plan, n, m, ai, t)
    except CalibrationInfeasibleError as exc:
        return SkippedCell(n=n, m=m, alpha=plan.alpha_grid[ai], trial=t, reason=str(exc))


def run_sweep(plan: SweepPlan, spec: SyntheticSpec, workers: int = 1) -> SweepResult:
    """Run every cell of the plan; results do not depend on ``workers``."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    jobs = [(spec, plan, cell) for cell in plan.cells()]
    if workers == 1:
        outcomes = [_run_cell_args(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell_args, jobs, chunksize=8))
    records = tuple(o for o in outcomes if isinstance(o, ExperimentRecord))
    skipped = tuple(o for o in outcomes if isinstance(o, SkippedCell))
    return SweepResult(records=records, skipped=skipped)


def fit_loglog(points: Sequence[tuple[float, float]]) -> FitResult:
    """OLS of log(v) on log(u) via the closed-form normal equations."""
    pts = [(float(u), float(v)) for u, v in points]
    if len(pts) < 2:
        raise ValueError("need at least 2 points to fit")
    if any(u <= 0 or v <= 0 for u, v in pts):
        raise ValueError("log-log fit requires strictly positive coordinates")
    lu = np.log([u for u, _ in pts])
    lv = np.log([v for _, v in pts])
    return _ols(lu, lv)


def _ols(x: np.ndarray, y: np.ndarray) -> FitResult:
    n = x.size
    mx, my = float(np.mean(x)), float(np.mean(y))
    sxx = float(np.sum((x - mx) ** 2))
    if sxx == 0.0:
        raise ValueError("all abscissae are identical; slope is undefined")
    sxy = float(np.sum((x - mx) * (y - my)))
    slope = sxy / sxx
    intercept = my - slope * mx
    resid = y - (intercept + slope * x)
    syy = float(np.sum((y - my) ** 2))
    r2 = 1.0 if syy == 0.0 else max(0.0, 1.0 - float(np.sum(resid**2)) / syy)
    return FitResult(slope=slope, intercept=intercept, r_squared=min(r2, 1.0), point_count=n)


def _mean_delta_by(
    records: Sequence[ExperimentRecord], key
) -> dict:
    groups: dict = {}
    for rec in records:
        groups.setdefault(key(rec), []).append(rec.delta)
    return {k: float(np.mean(v)) for k, v in groups.items()}


def _alpha_match(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def slope_vs_n(records: Sequence[ExperimentRecord], alpha: float, m_fixed: int) -> FitResult:
    """Fit log(mean delta over trials) against log(n) at one (alpha, m)."""
    sel = [r for r in records if _alpha_match(r.alpha, alpha) and r.m == m_fixed]
    if not sel:
        raise ValueError(f"no records match alpha={alpha}, m={m_fixed}")
    per_n = _mean_delta_by(sel, key=lambda r: r.n)
    return fit_loglog(sorted(per_n.items()))


def intercepts_vs_alpha(fits: Sequence[tuple[float, FitResult]]) -> FitResult:
    """Regress per-alpha intercepts on log(alpha)."""
    if len(fits) < 2:
        raise ValueError("need fits for at least 2 alpha levels")
    la = np.log([float(a) for a, _ in fits])
    b = np.array([f.intercept for _, f in fits])
    return _ols(la, b)


def slope_vs_inv_nalpha2(
    records: Sequence[ExperimentRecord], alpha_set: Sequence[float]
) -> FitResult:
    """Pooled fit of log(mean delta) against log(1 / (n alpha^2))."""
    alpha_set = [float(a) for a in alpha_set]
    sel = [r for r in records if any(_alpha_match(r.alpha, a) for a in alpha_set)]
    if not sel:
        raise ValueError("no records match the requested alpha set")
    per_cell = _mean_delta_by(sel, key=lambda r: (r.n, r.alpha))
    points = [(1.0 / (n * a**2), delta) for (n, a), delta in sorted(per_cell.items())]
    return fit_loglog(points)


def crossing_rate(
    spec: SyntheticSpec, plan: SweepPlan, n: int, m: int, alpha_index: int
) -> float:
    """Mean fraction of test covariates with crossed quantile estimates.

    Trains one quantile pair per trial with the same per-cell seeds as
    :func:`run_cell` and measures crossing on fresh test covariates.
    """
    if plan.method != "cqr":
        raise ValueError("quantile crossing is defined for the quantile-pair method")
    alpha = plan.alpha_grid[alpha_index]
    rates = []
    for trial in range(plan.trials):
        root = cell_seed_sequence(plan.master_seed, plan.method, n, m, alpha_index, trial)
        ss_train, _, ss_test, ss_tune_a, ss_fit_a, ss_tune_b, ss_fit_b = root.spawn(7)
        train = synthdata.sample(spec, n, ss_train)
        test = synthdata.sample(spec, plan.test_size, ss_test)
        lower = _train_model(train, alpha / 2, plan, ss_tune_a, ss_fit_a)
        upper = _train_model(train, 1 - alpha / 2, plan, ss_tune_b, ss_fit_b)
        pair = CqrModelPair(lower, upper, alpha)
        rates.append(conformal.crossing_fraction(pair, test.x))
    return float(np.mean(rates))

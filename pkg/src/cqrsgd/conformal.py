"""Split-conformal calibration for quantile and median regression.

Scores
------
CQR uses a pair of quantile models at levels alpha/2 and 1 - alpha/2 and
the signed two-sided score

    S(x, y) = max(t_lo(x) - y, y - t_hi(x)),

which is positive exactly when y falls outside [t_lo(x), t_hi(x)]. CMR
uses a single median model and the absolute residual |t(x) - y|.

Calibration takes the k-th smallest of the m calibration scores with

    k = ceil((1 - alpha) * (m + 1)),

which is feasible only when k <= m; infeasibility (m too small for the
requested alpha) raises :class:`CalibrationInfeasibleError` so a harness
can skip that cell. The index is computed with exact rational arithmetic
since a float ceil misfires on values like 0.9 * 100.

Intervals
---------
CQR returns [t_lo(x) - q, t_hi(x) + q] when its width is nonnegative and
the empty interval otherwise (crossed quantile estimates with a small q
can produce negative width). CMR returns [t(x) - q, t(x) + q], whose
length 2q does not depend on x. For nonempty intervals membership is
equivalent to score(x, y) <= q, with boundary ties counted as covered;
the empty interval covers nothing and has length 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import LinearQuantileModel, _check_gamma, _check_vector

__all__ = [
    "CalibrationInfeasibleError",
    "CqrModelPair",
    "PredictionInterval",
    "CalibrationResult",
    "cqr_score",
    "cqr_scores",
    "cmr_score",
    "cmr_scores",
    "conformal_quantile_index",
    "calibrate",
    "cqr_interval",
    "cqr_interval_bounds",
    "cmr_interval",
    "cmr_interval_bounds",
    "coverage",
    "coverage_from_bounds",
    "length_deviation",
    "length_deviation_from_bounds",
    "interval_lengths",
    "crossing_fraction",
]

_GAMMA_TOL = 1e-12


class CalibrationInfeasibleError(ValueError):
    """Raised when ceil((1-alpha)(m+1)) exceeds the calibration size m."""


@dataclass(frozen=True)
class CqrModelPair:
    """Lower (alpha/2) and upper (1 - alpha/2) quantile models."""

    lower: LinearQuantileModel
    upper: LinearQuantileModel
    alpha: float

    def __post_init__(self):
        alpha = float(self.alpha)
        if not (0.0 < alpha <= 0.5):
            raise ValueError(f"alpha must lie in (0, 1/2], got {alpha}")
        if abs(self.lower.gamma - alpha / 2) > _GAMMA_TOL:
            raise ValueError("lower model level must equal alpha/2")
        if abs(self.upper.gamma - (1 - alpha / 2)) > _GAMMA_TOL:
            raise ValueError("upper model level must equal 1 - alpha/2")
        if self.lower.d != self.upper.d:
            raise ValueError("lower and upper models must share a dimension")
        object.__setattr__(self, "alpha", alpha)

    @property
    def d(self) -> int:
        return self.lower.d


@dataclass(frozen=True)
class PredictionInterval:
    """Closed interval [lo, hi], or the empty set (length 0)."""

    lo: float
    hi: float
    empty: bool = False

    def __post_init__(self):
        if self.empty:
            object.__setattr__(self, "lo", float("nan"))
            object.__setattr__(self, "hi", float("nan"))
        else:
            lo, hi = float(self.lo), float(self.hi)
            if not (lo <= hi):
                raise ValueError(f"nonempty interval needs lo <= hi, got [{lo}, {hi}]")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)

    @classmethod
    def empty_set(cls) -> "PredictionInterval":
        return cls(float("nan"), float("nan"), empty=True)

    @property
    def length(self) -> float:
        return 0.0 if self.empty else self.hi - self.lo

    def contains(self, y: float) -> bool:
        return (not self.empty) and self.lo <= y <= self.hi


@dataclass(frozen=True)
class CalibrationResult:
    """The calibrated score threshold together with the sorted scores."""

    q_hat: float
    m: int
    alpha: float
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)


def _check_xy(d: int, x) -> np.ndarray:
    x = _check_vector(x)
    if x.shape[0] != d:
        raise ValueError(f"dimension mismatch: expected d={d}, got d={x.shape[0]}")
    return x


def cqr_score(pair: CqrModelPair, x, y: float) -> float:
    """Two-sided score max(t_lo(x) - y, y - t_hi(x))."""
    x = _check_xy(pair.d, x)
    y = float(y)
    return max(float(pair.lower.theta @ x) - y, y - float(pair.upper.theta @ x))


def cqr_scores(pair: CqrModelPair, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized :func:`cqr_score` over rows of x."""
    t_lo = pair.lower.predict_many(x)
    t_hi = pair.upper.predict_many(x)
    y = np.asarray(y, dtype=float)
    return np.maximum(t_lo - y, y - t_hi)


def cmr_score(model: LinearQuantileModel, x, y: float) -> float:
    """Absolute residual |t(x) - y| of a median model (gamma = 1/2)."""
    if abs(model.gamma - 0.5) > _GAMMA_TOL:
        raise ValueError("median-regression scores require a gamma = 1/2 model")
    x = _check_xy(model.d, x)
    return abs(float(model.theta @ x) - float(y))


def cmr_scores(model: LinearQuantileModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if abs(model.gamma - 0.5) > _GAMMA_TOL:
        raise ValueError("median-regression scores require a gamma = 1/2 model")
    return np.abs(model.predict_many(x) - np.asarray(y, dtype=float))


def conformal_quantile_index(m: int, alpha: float) -> int:
    """1-based order-statistic index k = ceil((1-alpha)(m+1)).

    Uses exact rational arithmetic on the binary value of ``alpha`` so
    that, e.g., m=99 and alpha=0.1 yield k=90 rather than a float-ceil
    artifact of 91. Raises :class:`CalibrationInfeasibleError` if k > m.
    """
    m = int(m)
    if m < 1:
        raise ValueError("calibration size m must be >= 1")
    alpha = _check_gamma(alpha)
    k = math.ceil((1 - Fraction(alpha)) * (m + 1))
    if k > m:
        raise CalibrationInfeasibleError(
            f"need the {k}-th of {m} scores: m is too small for alpha={alpha}"
        )
    return k


def calibrate(scores, alpha: float) -> CalibrationResult:
    """Empirical conformal quantile: the k-th smallest calibration score.

    Sorting is ascending and stable; the result is invariant to any
    permutation of ``scores``.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a nonempty 1-D array")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite (no NaN/Inf)")
    m = scores.size
    k = conformal_quantile_index(m, alpha)
    ordered = np.sort(scores, kind="stable")
    return CalibrationResult(q_hat=float(ordered[k - 1]), m=m, alpha=float(alpha), scores=ordered)


def cqr_interval(pair: CqrModelPair, q_hat: float, x) -> PredictionInterval:
    """[t_lo(x) - q, t_hi(x) + q], or the empty set if the width is negative."""
    x = _check_xy(pair.d, x)
    q = float(q_hat)
    lo = float(pair.lower.theta @ x) - q
    hi = float(pair.upper.theta @ x) + q
    if hi - lo < 0:
        return PredictionInterval.empty_set()
    return PredictionInterval(lo, hi)


def cqr_interval_bounds(
    pair: CqrModelPair, q_hat: float, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized interval endpoints: arrays (lo, hi, empty) over rows of x."""
    q = float(q_hat)
    lo = pair.lower.predict_many(x) - q
    hi = pair.upper.predict_many(x) + q
    empty = hi - lo < 0
    return lo, hi, empty


def cmr_interval(model: LinearQuantileModel, q_hat: float, x) -> PredictionInterval:
    """[t(x) - q, t(x) + q]; the length 2q is the same for every x."""
    if abs(model.gamma - 0.5) > _GAMMA_TOL:
        raise ValueError("median-regression intervals require a gamma = 1/2 model")
    q = float(q_hat)
    if q < 0:
        raise ValueError("q_hat from absolute-residual scores must be >= 0")
    x = _check_xy(model.d, x)
    mid = float(model.theta @ x)
    return PredictionInterval(mid - q, mid + q)


def cmr_interval_bounds(
    model: LinearQuantileModel, q_hat: float, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    q = float(q_hat)
    if q < 0:
        raise ValueError("q_hat from absolute-residual scores must be >= 0")
    mid = model.predict_many(x)
    return mid - q, mid + q, np.zeros(mid.shape, dtype=bool)


def coverage(intervals: Sequence[PredictionInterval], ys) -> float:
    """Fraction of labels inside their interval; the empty set never covers."""
    ys = np.asarray(ys, dtype=float)
    if len(intervals) != ys.size:
        raise ValueError("intervals and labels must have equal length")
    if ys.size == 0:
        raise ValueError("coverage of zero points is undefined")
    hits = sum(iv.contains(float(y)) for iv, y in zip(intervals, ys))
    return hits / ys.size


def coverage_from_bounds(lo: np.ndarray, hi: np.ndarray, empty: np.ndarray, ys) -> float:
    ys = np.asarray(ys, dtype=float)
    if not (lo.shape == hi.shape == empty.shape == ys.shape):
        raise ValueError("mismatched shapes")
    covered = (~empty) & (lo <= ys) & (ys <= hi)
    return float(np.mean(covered))


def interval_lengths(lo: np.ndarray, hi: np.ndarray, empty: np.ndarray) -> np.ndarray:
    return np.where(empty, 0.0, hi - lo)


def length_deviation(intervals: Sequence[PredictionInterval], oracle_lengths) -> float:
    """Mean absolute gap between produced and oracle interval lengths."""
    oracle = np.asarray(oracle_lengths, dtype=float)
    if len(intervals) != oracle.size:
        raise ValueError("intervals and oracle lengths must have equal length")
    if oracle.size == 0:
        raise ValueError("length deviation of zero points is undefined")
    if np.any(oracle < 0):
        raise ValueError("oracle lengths must be nonnegative")
    lengths = np.array([iv.length for iv in intervals])
    return float(np.mean(np.abs(lengths - oracle)))


def length_deviation_from_bounds(
    lo: np.ndarray, hi: np.ndarray, empty: np.ndarray, oracle_lengths: np.ndarray
) -> float:
    lengths = interval_lengths(lo, hi, empty)
    return float(np.mean(np.abs(lengths - np.asarray(oracle_lengths, dtype=float))))


def crossing_fraction(pair: CqrModelPair, x: np.ndarray) -> float:
    """Fraction of covariates where the lower estimate exceeds the upper."""
    return float(np.mean(pair.upper.predict_many(x) < pair.lower.predict_many(x)))

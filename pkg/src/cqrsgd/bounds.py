"""Closed-form constants and efficiency bounds for conformalized regression.

Given distribution constants (B, K, d, lambda bounds, density bounds)
this module evaluates:

* the flatness ratio H = f_max / f_min and the score-range bound
  R = 2 B K + 1 / f_min;
* beta = min(alpha, 1-alpha) / (2 f_max), A = 4 lam_max^2 f_max d /
  (lam_min^4 f_min^2), and eps_n = B sqrt(2 A / (n delta));
* the sample-size condition m > 8 H / min(alpha, 1-alpha) under which the
  finite-sample length-deviation bounds hold;
* the explicit five-term upper bounds on the expected deviation of the
  prediction-interval length from the oracle interval length, for the
  two-sided (quantile-pair) and the symmetric (median-residual) methods;
* the regime classifier for the dominant bound term as a function of
  (n, m, alpha), and a data-allocation heuristic.

The bounds are valid upper bounds, loose by construction; evaluators only
promise positivity, finiteness, and monotone decrease in n and m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import DistributionSpec

__all__ = [
    "TheoryConstants",
    "SampleSizeConditionError",
    "constants",
    "check_m_condition",
    "cqr_bound",
    "cmr_bound",
    "classify_regime",
    "allocation_advice",
    "REGIMES",
]

REGIMES = ("vacuous", "alpha-squared-n", "exp-m", "balanced")


class SampleSizeConditionError(ValueError):
    """Raised when a bound is evaluated with m below its validity threshold."""


@dataclass(frozen=True)
class TheoryConstants:
    """Derived constants; all strictly positive, H >= 1."""

    H: float
    R: float
    beta: float
    A: float
    eps_n: float
    delta: float

    def __post_init__(self):
        if not all(v > 0 for v in (self.H, self.R, self.beta, self.A, self.eps_n, self.delta)):
            raise ValueError("theory constants must be strictly positive")
        if self.H < 1:
            raise ValueError("H = f_max / f_min cannot be below 1")


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def constants(spec: DistributionSpec, alpha: float, n: int, delta: float) -> TheoryConstants:
    """Evaluate H, R, beta, A and eps_n for the given distribution."""
    alpha = _check_alpha(alpha)
    if n < 1:
        raise ValueError("n must be >= 1")
    delta = float(delta)
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    H = spec.f_max / spec.f_min
    R = 2.0 * spec.B * spec.K + 1.0 / spec.f_min
    beta = min(alpha, 1.0 - alpha) / (2.0 * spec.f_max)
    A = 4.0 * spec.lambda_max**2 * spec.f_max * spec.d / (spec.lambda_min**4 * spec.f_min**2)
    eps_n = spec.B * math.sqrt(2.0 * A / (n * delta))
    return TheoryConstants(H=H, R=R, beta=beta, A=A, eps_n=eps_n, delta=delta)


def check_m_condition(H: float, alpha: float, m: int) -> bool:
    """True iff m > 8 H / min(alpha, 1 - alpha) (strict)."""
    alpha = _check_alpha(alpha)
    if H < 1:
        raise ValueError("H must be >= 1")
    return m > 8.0 * H / min(alpha, 1.0 - alpha)


def _common(spec: DistributionSpec, alpha: float, n: int, m: int, enforce_condition: bool):
    alpha = _check_alpha(alpha)
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    H = spec.f_max / spec.f_min
    if enforce_condition and not check_m_condition(H, alpha, m):
        raise SampleSizeConditionError(
            f"m={m} does not satisfy m > 8H/min(alpha, 1-alpha) = "
            f"{8.0 * H / min(alpha, 1.0 - alpha):.6g}"
        )
    R = 2.0 * spec.B * spec.K + 1.0 / spec.f_min
    mn2 = min(alpha, 1.0 - alpha) ** 2
    return alpha, R, mn2


def cqr_bound(
    spec: DistributionSpec, alpha: float, n: int, m: int, *, enforce_condition: bool = True
) -> float:
    """Explicit upper bound on the expected length deviation (quantile pair).

    Five terms: a sqrt(1/n) training term, a sqrt(1/m) and a 1/m
    calibration term, an exp(-c m) term, and a 1/(min(alpha,1-alpha)^2 n)
    term. Set ``enforce_condition=False`` to evaluate the formula even
    when the m > 8H/min(alpha,1-alpha) validity condition fails.
    """
    alpha, R, mn2 = _common(spec, alpha, n, m, enforce_condition)
    lmin, lmax = spec.lambda_min, spec.lambda_max
    fmin, fmax = spec.f_min, spec.f_max
    B, d = spec.B, spec.d
    term_train = (
        4.0 * lmax * math.sqrt(fmax * d) / (lmin * fmin * math.sqrt(lmin))
        + 2.0 * B * lmax * math.sqrt(2.0 * fmax * d) / (lmin**2 * fmin)
    ) * math.sqrt(1.0 / n)
    term_sqrt_m = math.sqrt(math.pi) / (2.0 * fmin * math.sqrt(2.0)) * math.sqrt(1.0 / m)
    term_inv_m = 1.0 / (fmin * m)
    term_exp = 4.0 * R * math.exp(-mn2 * fmin**2 * m / (8.0 * fmax**2))
    term_inv_n = 1056.0 * lmax**2 * fmax**3 * B**2 * R / (mn2 * lmin**4 * fmin**2 * n)
    return term_train + term_sqrt_m + term_inv_m + term_exp + term_inv_n


def cmr_bound(
    spec: DistributionSpec, alpha: float, n: int, m: int, *, enforce_condition: bool = True
) -> float:
    """Explicit upper bound for the symmetric (median-residual) method."""
    alpha, R, mn2 = _common(spec, alpha, n, m, enforce_condition)
    lmin, lmax = spec.lambda_min, spec.lambda_max
    fmin, fmax = spec.f_min, spec.f_max
    B, d = spec.B, spec.d
    term_train = 4.0 * B * lmax * math.sqrt(fmax * d) / (lmin**2 * fmin) * math.sqrt(1.0 / n)
    term_sqrt_m = math.sqrt(math.pi) / (fmin * math.sqrt(2.0 * m))
    term_inv_m = 2.0 / (fmin * m)
    term_exp = 8.0 * R * math.exp(-fmin**2 * mn2 * m / (8.0 * fmax**2))
    term_inv_n = 2056.0 * R * lmax**2 * fmax**3 * B**2 * d / (lmin**4 * fmin**2 * mn2 * n)
    return term_train + term_sqrt_m + term_inv_m + term_exp + term_inv_n


def classify_regime(n: int, m: int, alpha: float, c: float = 1.0) -> str:
    """Label the dominant-term regime for (n, m, alpha).

    * ``vacuous``: alpha <= c * max(n^-1/2, m^-1/2); the deviation bound
      does not converge at this miscoverage level.
    * ``alpha-squared-n``: alpha < c * n^-1/4; the 1/(alpha^2 n) training
      term dominates the n-dependence.
    * ``exp-m``: alpha < c * sqrt(log(m) / m); the exponential term
      dominates the m-dependence.
    * ``balanced``: otherwise; the bound scales as n^-1/2 + m^-1/2.

    The asymptotic statements carry unspecified constants; ``c`` makes
    the thresholds concrete (default 1).
    """
    alpha = _check_alpha(alpha)
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    if not (c > 0):
        raise ValueError("threshold constant c must be positive")
    if alpha <= c * max(n**-0.5, m**-0.5):
        return "vacuous"
    if alpha < c * n**-0.25:
        return "alpha-squared-n"
    if alpha < c * math.sqrt(math.log(m) / m):
        return "exp-m"
    return "balanced"


def allocation_advice(alpha: float, n_total: int) -> tuple[int, int]:
    """Suggest a (train, calibration) split of ``n_total`` samples.

    For alpha large enough that the n-terms scale as n^-1/2 at the even
    split (alpha >= (n_total/2)^-1/4), an even split balances the
    n^-1/2 and m^-1/2 terms. For smaller alpha the calibration share
    follows m = ceil(alpha^4 n^4) capped at n_total - n, found by integer
    search; training then absorbs the rest. Always returns n + m =
    n_total with n, m >= 1.
    """
    alpha = _check_alpha(alpha)
    if n_total < 2:
        raise ValueError("n_total must be >= 2")
    m_even = n_total // 2
    n_even = n_total - m_even
    if alpha >= (n_total / 2.0) ** -0.25:
        return n_even, m_even
    # Smallest n whose target calibration share ceil(alpha^4 n^4) already
    # covers the remainder; below it the remainder exceeds the target.
    lo, hi = 1, n_total - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if math.ceil(alpha**4 * mid**4) >= n_total - mid:
            hi = mid
        else:
            lo = mid + 1
    n = lo
    return n, n_total - n

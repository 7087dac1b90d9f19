"""Synthetic distribution with an exact conditional quantile oracle.

Construction
------------
A direction vector theta0 is drawn once from Uniform([1, 2]^d) and fixed.
Covariates are uniform on a box (default [1, 20]^2). Labels live on the
fixed support [-y_max, y_max] with y_max = theta0 @ x_high. Given x, write
a = theta0 @ x for the central half-width. The conditional density of
y | x is piecewise affine with five segments, symmetric about zero:

* a central plateau on [-a, a] of height f_c = (1 - alpha0) / (2a),
  carrying mass 1 - alpha0;
* two affine tail pieces per side on [a, y_max], each carrying mass
  alpha0 / 4, continuous with the plateau at +-a, ending at a strictly
  positive floor density f_floor = alpha0 / (8 (y_max - a)) at +-y_max.

Because the plateau alone determines every quantile level in
[alpha0/2, 1 - alpha0/2], the conditional gamma-quantile there is exactly
linear in x:

    q_gamma(y | x) = (2 gamma - 1) / (1 - alpha0) * theta0 @ x,

so the linear model class is well specified with
theta*(gamma) = (2 gamma - 1) / (1 - alpha0) * theta0, and the oracle
interval [q_{alpha/2}, q_{1-alpha/2}] has length
2 (1 - alpha) / (1 - alpha0) * theta0 @ x for any alpha in (alpha0, 1/2].

Tail shape. Continuity at the plateau pins one endpoint of the inner tail
piece at f_c, the floor pins the outer endpoint at f_floor, and the two
per-piece masses pin the knot: with s = alpha0 / L, L = y_max - a, the
knot density f_k is the positive root of

    u^2 + (f_c + f_floor - s) u + f_c f_floor - (s / 2)(f_c + f_floor) = 0

and the inner piece width is w1 = alpha0 / (2 (f_c + f_k)). The root is
real and positive for every x strictly inside the box (the discriminant
equals (f_c - f_floor)^2 + s^2). At the single corner x = x_high the tail
width collapses to zero and the conditional density degenerates; that
point has probability zero under the covariate distribution and is
rejected by the oracle functions.

Sampling uses rejection with a uniform proposal on [y_min, y_max] and the
per-x envelope constant sup_y pdf(y | x) * (y_max - y_min); draws are a
deterministic function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, DistributionSpec, _check_gamma

__all__ = [
    "SyntheticSpec",
    "TailGeometry",
    "draw_spec",
    "homoscedastic_spec",
    "tail_geometry",
    "conditional_pdf",
    "conditional_cdf",
    "conditional_quantile",
    "oracle_theta",
    "oracle_interval_length",
    "oracle_interval_lengths",
    "sample",
    "sample_with_stats",
    "measure_distribution_spec",
    "plateau_density_floor",
]

_DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic distribution.

    ``y_max`` defaults to theta0 @ x_high, the largest central half-width
    over the box. Passing it explicitly (>= the default) widens the label
    support, which is how the homoscedastic variant keeps nondegenerate
    tails when the covariate box collapses to a point.
    """

    theta0: np.ndarray
    alpha0: float = 0.005
    x_low: np.ndarray = (1.0, 1.0)
    x_high: np.ndarray = (20.0, 20.0)
    y_max: float | None = None

    def __post_init__(self):
        theta0 = np.array(self.theta0, dtype=float)
        if theta0.ndim != 1 or theta0.size < 1:
            raise ValueError("theta0 must be a 1-D vector")
        if np.any(theta0 < 1.0) or np.any(theta0 > 2.0):
            raise ValueError("theta0 components must lie in [1, 2]")
        theta0.setflags(write=False)
        object.__setattr__(self, "theta0", theta0)
        if not (0.0 < self.alpha0 < 0.5):
            raise ValueError("alpha0 must lie in (0, 1/2)")
        x_low = np.array(self.x_low, dtype=float)
        x_high = np.array(self.x_high, dtype=float)
        if x_low.shape != theta0.shape or x_high.shape != theta0.shape:
            raise ValueError("box bounds must match the dimension of theta0")
        if np.any(x_low <= 0) or np.any(x_high < x_low):
            raise ValueError("need 0 < x_low <= x_high componentwise")
        x_low.setflags(write=False)
        x_high.setflags(write=False)
        object.__setattr__(self, "x_low", x_low)
        object.__setattr__(self, "x_high", x_high)
        default_ymax = float(theta0 @ x_high)
        y_max = default_ymax if self.y_max is None else float(self.y_max)
        if y_max < default_ymax * (1 - 1e-12):
            raise ValueError("y_max must be at least theta0 @ x_high")
        object.__setattr__(self, "y_max", y_max)

    @property
    def d(self) -> int:
        return self.theta0.shape[0]

    @property
    def y_min(self) -> float:
        return -self.y_max

    def half_width(self, x: np.ndarray) -> np.ndarray:
        """Central half-width a = theta0 @ x for rows of x (or one vector)."""
        return np.asarray(x, dtype=float) @ self.theta0

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        tol = 1e-9 * np.maximum(1.0, np.abs(self.x_high))
        return bool(np.all(x >= self.x_low - tol) and np.all(x <= self.x_high + tol))


def draw_spec(seed, d: int = 2, alpha0: float = 0.005) -> SyntheticSpec:
    """Draw theta0 ~ Uniform([1, 2]^d) once and fix it for a whole run."""
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(1.0, 2.0, size=d)
    return SyntheticSpec(theta0=theta0, alpha0=alpha0, x_low=np.ones(d), x_high=20.0 * np.ones(d))


def homoscedastic_spec(
    theta0, alpha0: float = 0.005, x_point=(10.5, 10.5), y_anchor=(20.0, 20.0)
) -> SyntheticSpec:
    """Variant with X fixed at one point, so the half-width is constant.

    The label support stays anchored at theta0 @ y_anchor, keeping the
    tails nondegenerate. All conditional quantiles are then independent
    of x, which is the setting where a constant-width symmetric interval
    matches the oracle interval.
    """
    theta0 = np.asarray(theta0, dtype=float)
    x_point = np.asarray(x_point, dtype=float)
    return SyntheticSpec(
        theta0=theta0,
        alpha0=alpha0,
        x_low=x_point,
        x_high=x_point,
        y_max=float(theta0 @ np.asarray(y_anchor, dtype=float)),
    )


@dataclass(frozen=True)
class TailGeometry:
    """Per-x densities and widths of the five-segment conditional pdf.

    Arrays are aligned with the half-widths they were computed from:
    ``f_c`` plateau height, ``f_k`` knot density, ``f_floor`` density at
    the support edge, ``w1`` inner tail-piece width, ``tail`` = y_max - a.
    """

    a: np.ndarray
    f_c: np.ndarray
    f_k: np.ndarray
    f_floor: np.ndarray
    w1: np.ndarray
    tail: np.ndarray

    @property
    def sup_pdf(self) -> np.ndarray:
        return np.maximum(self.f_c, self.f_k)


def tail_geometry(spec: SyntheticSpec, a) -> TailGeometry:
    """Solve the tail construction for half-widths ``a`` (vectorized)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(a <= 0):
        raise ValueError("half-width theta0 @ x must be positive")
    tail = spec.y_max - a
    if np.any(tail <= _DEGENERATE_TOL * spec.y_max):
        raise ValueError(
            "degenerate tail: x lies at the corner of the box where the "
            "conditional density is unbounded"
        )
    alpha0 = spec.alpha0
    f_c = (1.0 - alpha0) / (2.0 * a)
    f_floor = alpha0 / (8.0 * tail)
    s = alpha0 / tail
    p = f_c + f_floor
    disc = np.sqrt((f_c - f_floor) ** 2 + s**2)
    f_k = 0.5 * (s - p + disc)
    w1 = alpha0 / (2.0 * (f_c + f_k))
    return TailGeometry(a=a, f_c=f_c, f_k=f_k, f_floor=f_floor, w1=w1, tail=tail)


def _pdf_from_geometry(spec: SyntheticSpec, geom: TailGeometry, y: np.ndarray) -> np.ndarray:
    """Densities for per-row pairs: geom row i with label y[i]."""
    z = np.abs(np.asarray(y, dtype=float))
    a, w1 = geom.a, geom.w1
    w2 = geom.tail - w1
    inner = a + w1
    out = np.zeros_like(z)
    central = z <= a
    out = np.where(central, geom.f_c, out)
    in_inner = (~central) & (z <= inner)
    frac1 = np.where(in_inner, (z - a) / np.where(w1 > 0, w1, 1.0), 0.0)
    out = np.where(in_inner, geom.f_c + (geom.f_k - geom.f_c) * frac1, out)
    in_outer = (z > inner) & (z <= spec.y_max)
    frac2 = np.where(in_outer, (z - inner) / np.where(w2 > 0, w2, 1.0), 0.0)
    out = np.where(in_outer, geom.f_k + (geom.f_floor - geom.f_k) * frac2, out)
    return out


def conditional_pdf(spec: SyntheticSpec, x, y):
    """pdf of y | x; zero outside [y_min, y_max]. ``y`` may be an array."""
    x = np.asarray(x, dtype=float)
    if not spec.contains(x):
        raise ValueError("x lies outside the covariate box")
    geom = tail_geometry(spec, spec.half_width(x))
    scalar = np.isscalar(y) or np.asarray(y).ndim == 0
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    out = _pdf_from_geometry(spec, geom, y_arr)
    return float(out[0]) if scalar else out


def _cdf_nonneg(spec: SyntheticSpec, geom: TailGeometry, z: np.ndarray) -> np.ndarray:
    """cdf at z >= 0 for scalar geometry broadcast over z."""
    a = geom.a
    w1, w2 = geom.w1, geom.tail - geom.w1
    alpha0 = spec.alpha0
    f_c, f_k, f_fl = geom.f_c, geom.f_k, geom.f_floor
    out = np.empty_like(z)

    central = z <= a
    out[central] = 0.5 + f_c * z[central]

    t1 = np.clip(z - a, 0.0, w1)
    t2 = np.clip(z - a - w1, 0.0, w2)
    inner = (~central) & (z <= a + w1)
    out[inner] = (1 - alpha0 / 2) + f_c * t1[inner] + (f_k - f_c) * t1[inner] ** 2 / (2 * w1)
    outer = z > a + w1
    out[outer] = (1 - alpha0 / 4) + f_k * t2[outer] + (f_fl - f_k) * t2[outer] ** 2 / (2 * w2)
    return np.minimum(out, 1.0)


def conditional_cdf(spec: SyntheticSpec, x, y):
    """Exact cdf of y | x: piecewise linear centrally, quadratic in the tails."""
    x = np.asarray(x, dtype=float)
    if not spec.contains(x):
        raise ValueError("x lies outside the covariate box")
    geom = tail_geometry(spec, spec.half_width(x))
    scalar = np.isscalar(y) or np.asarray(y).ndim == 0
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    upper = _cdf_nonneg(spec, geom, np.abs(y_arr))
    out = np.where(y_arr >= 0, upper, 1.0 - upper)
    out = np.where(y_arr <= spec.y_min, 0.0, out)
    out = np.where(y_arr >= spec.y_max, 1.0, out)
    return float(out[0]) if scalar else out


def _invert_tail_piece(g: float, f_start: float, f_end: float, width: float) -> float:
    """Solve f_start*t + (f_end-f_start)*t^2/(2*width) = g for t in [0, width]."""
    c2 = (f_end - f_start) / (2.0 * width)
    if abs(c2) < 1e-300:
        return g / f_start
    disc = f_start**2 + 4.0 * c2 * g
    disc = max(disc, 0.0)
    t = (-f_start + math.sqrt(disc)) / (2.0 * c2)
    if not (0.0 <= t <= width * (1 + 1e-9)):
        t = (-f_start - math.sqrt(disc)) / (2.0 * c2)
    return min(max(t, 0.0), width)


def conditional_quantile(spec: SyntheticSpec, x, gamma: float) -> float:
    """Exact inverse of :func:`conditional_cdf` at level gamma.

    Central levels invert in closed form; tail levels invert the
    per-piece quadratic, with a bisection fallback (tol 1e-12) if the
    closed form loses accuracy.
    """
    gamma = _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    if not spec.contains(x):
        raise ValueError("x lies outside the covariate box")
    alpha0 = spec.alpha0
    if gamma < 0.5:
        return -conditional_quantile(spec, x, 1.0 - gamma)
    a = float(spec.half_width(x))
    if gamma <= 1.0 - alpha0 / 2:
        return (2.0 * gamma - 1.0) / (1.0 - alpha0) * a
    geom = tail_geometry(spec, a)
    f_c, f_k, f_fl = float(geom.f_c[0]), float(geom.f_k[0]), float(geom.f_floor[0])
    w1 = float(geom.w1[0])
    w2 = float(geom.tail[0]) - w1
    if gamma <= 1.0 - alpha0 / 4:
        q = a + _invert_tail_piece(gamma - (1.0 - alpha0 / 2), f_c, f_k, w1)
    else:
        q = a + w1 + _invert_tail_piece(gamma - (1.0 - alpha0 / 4), f_k, f_fl, w2)
    if abs(conditional_cdf(spec, x, q) - gamma) > 1e-12:
        lo, hi = a, spec.y_max
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if conditional_cdf(spec, x, mid) < gamma:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * max(1.0, abs(hi)):
                break
        q = 0.5 * (lo + hi)
    return q


def oracle_theta(spec: SyntheticSpec, gamma: float) -> np.ndarray:
    """Exact minimizer theta*(gamma) = (2*gamma - 1) / (1 - alpha0) * theta0.

    Valid for gamma in [alpha0/2, 1 - alpha0/2], the range where the
    conditional quantile is linear in x.
    """
    gamma = _check_gamma(gamma)
    if not (spec.alpha0 / 2 - 1e-15 <= gamma <= 1 - spec.alpha0 / 2 + 1e-15):
        raise ValueError(
            f"gamma={gamma} is outside the well-specified range "
            f"[{spec.alpha0 / 2}, {1 - spec.alpha0 / 2}]"
        )
    return (2.0 * gamma - 1.0) / (1.0 - spec.alpha0) * spec.theta0


def oracle_interval_length(spec: SyntheticSpec, x, alpha: float) -> float:
    """Length of the oracle interval: 2 (1 - alpha) / (1 - alpha0) * theta0 @ x."""
    x = np.asarray(x, dtype=float)
    if not spec.contains(x):
        raise ValueError("x lies outside the covariate box")
    alpha = float(alpha)
    if not (spec.alpha0 < alpha <= 0.5):
        raise ValueError(f"alpha must lie in ({spec.alpha0}, 1/2], got {alpha}")
    return 2.0 * (1.0 - alpha) / (1.0 - spec.alpha0) * float(spec.half_width(x))


def oracle_interval_lengths(spec: SyntheticSpec, x: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized :func:`oracle_interval_length` over rows of x."""
    alpha = float(alpha)
    if not (spec.alpha0 < alpha <= 0.5):
        raise ValueError(f"alpha must lie in ({spec.alpha0}, 1/2], got {alpha}")
    return 2.0 * (1.0 - alpha) / (1.0 - spec.alpha0) * spec.half_width(x)


def sample_with_stats(spec: SyntheticSpec, count: int, seed) -> tuple[Dataset, int]:
    """Draw ``count`` i.i.d. pairs; also return total rejection proposals."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(spec.x_low, spec.x_high, size=(count, spec.d))
    geom = tail_geometry(spec, spec.half_width(x))
    sup = geom.sup_pdf
    y = np.empty(count)
    pending = np.arange(count)
    proposals = 0
    while pending.size:
        k = pending.size
        proposals += k
        cand = rng.uniform(spec.y_min, spec.y_max, size=k)
        sub = TailGeometry(*(arr[pending] for arr in
                             (geom.a, geom.f_c, geom.f_k, geom.f_floor, geom.w1, geom.tail)))
        dens = _pdf_from_geometry(spec, sub, cand)
        accept = rng.uniform(0.0, 1.0, size=k) * sup[pending] <= dens
        y[pending[accept]] = cand[accept]
        pending = pending[~accept]
    return Dataset(x, y), proposals


def sample(spec: SyntheticSpec, count: int, seed) -> Dataset:
    """Covariates uniform on the box; labels by per-x rejection sampling."""
    data, _ = sample_with_stats(spec, count, seed)
    return data


def plateau_density_floor(spec: SyntheticSpec) -> float:
    """Smallest plateau density over the box: (1 - alpha0) / (2 * y_max).

    This is the density floor on the region where the central quantiles
    live, and hence the curvature constant relevant to training at levels
    inside [alpha0/2, 1 - alpha0/2]. The global density floor over the
    full support (the tails) is far smaller; see
    :func:`measure_distribution_spec`.
    """
    return (1.0 - spec.alpha0) / (2.0 * spec.y_max)


def measure_distribution_spec(spec: SyntheticSpec, grid_points: int = 33) -> DistributionSpec:
    """Numerically measured distribution constants for a synthetic spec.

    Covariate and parameter bounds and the second-moment eigenvalues are
    exact for the uniform box; the density bounds are exact per grid
    point (the pdf is piecewise affine, so per-x extremes sit at the
    knots) and minimized/maximized over a grid of x values. Grid points
    with degenerate tails (only the exact corner x_high when y_max is the
    default) are excluded; the density there is unbounded on a set of
    probability zero.
    """
    lo, hi = spec.x_low, spec.x_high
    B = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    K = spec.y_max / B
    mean = (lo + hi) / 2.0
    second = (lo**2 + lo * hi + hi**2) / 3.0
    sigma = np.outer(mean, mean)
    np.fill_diagonal(sigma, second)
    eigs = np.linalg.eigvalsh(sigma)
    axes = [np.linspace(lo[i], hi[i], grid_points) for i in range(spec.d)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    a = spec.half_width(grid)
    ok = spec.y_max - a > _DEGENERATE_TOL * spec.y_max
    geom = tail_geometry(spec, a[ok])
    f_min = float(np.min(np.minimum(np.minimum(geom.f_c, geom.f_k), geom.f_floor)))
    f_max = float(np.max(geom.sup_pdf))
    return DistributionSpec(
        B=B,
        K=K,
        d=spec.d,
        lambda_min=float(eigs[0]),
        lambda_max=float(eigs[-1]),
        f_min=f_min,
        f_max=f_max,
        y_min=spec.y_min,
        y_max=spec.y_max,
    )

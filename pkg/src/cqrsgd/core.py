"""Domain types and the pinball-loss primitives for linear quantile models.

Conventions
-----------
A sample is a covariate vector x in R^d with a scalar label y. A linear
quantile model predicts t_gamma(x; theta) = theta @ x for a quantile level
gamma in (0, 1). The pinball loss for a prediction t and a label y is

    L_gamma(t, y) = gamma * (y - t)        if y >= t
                    (1 - gamma) * (t - y)  if y <  t

whose population minimizer over t is the conditional gamma-quantile of y.
A per-sample stochastic subgradient of the population objective
E[L_gamma(theta @ X, Y)] at theta is

    g(theta; x, y) = (1{y < theta @ x} - gamma) * x.

At the kink y = theta @ x the indicator is 0, i.e. the subgradient of the
y >= t branch is used; any element of the subdifferential is valid and a
fixed convention keeps results deterministic.

All values are 64-bit floats and all containers are immutable after
construction, so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

__all__ = [
    "Sample",
    "Dataset",
    "LinearQuantileModel",
    "DistributionSpec",
    "pinball_loss",
    "pinball_subgradient",
    "predict",
]


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"quantile level must lie in (0, 1), got {gamma}")
    return gamma


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_vector(x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"{name} must be a 1-D vector of length >= 1, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite (no NaN/Inf)")
    return x


@dataclass(frozen=True)
class Sample:
    """One covariate vector with its scalar label."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_readonly(_check_vector(self.x)))
        y = float(self.y)
        if not np.isfinite(y):
            raise ValueError("label must be finite")
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return self.x.shape[0]


class Dataset:
    """An ordered, immutable collection of samples with uniform dimension.

    Backed by dense arrays: ``x`` has shape (n, d) and ``y`` shape (n,).
    A dataset may be empty; operations that need data (training,
    calibration) reject empty inputs at the point of use.
    """

    __slots__ = ("_x", "_y")

    def __init__(self, x, y):
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"covariates must be a 2-D array, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("labels must be 1-D with one entry per covariate row")
        if x.shape[1] < 1:
            raise ValueError("dimension d must be >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset values must be finite (no NaN/Inf)")
        x.setflags(write=False)
        y.setflags(write=False)
        self._x = x
        self._y = y

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("cannot infer dimension from an empty sample list")
        d = samples[0].d
        if any(s.d != d for s in samples):
            raise ValueError("all samples must share the same dimension")
        return cls(np.stack([s.x for s in samples]), np.array([s.y for s in samples]))

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def n(self) -> int:
        return self._x.shape[0]

    @property
    def d(self) -> int:
        return self._x.shape[1]

    def __len__(self) -> int:
        return self.n

    def sample(self, i: int) -> Sample:
        return Sample(self._x[i], float(self._y[i]))

    def __iter__(self) -> Iterator[Sample]:
        return (self.sample(i) for i in range(self.n))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self._x[idx], self._y[idx])

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, d={self.d})"


@dataclass(frozen=True)
class LinearQuantileModel:
    """Linear quantile predictor t_gamma(x; theta) = theta @ x.

    ``gamma`` tags the quantile level the parameters were trained for.
    When produced by the projected trainer the parameter norm satisfies
    ||theta||_2 <= K for the trainer's projection radius K; the type
    itself does not carry K.
    """

    theta: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "theta", _as_readonly(_check_vector(self.theta, "theta")))
        object.__setattr__(self, "gamma", _check_gamma(self.gamma))

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    def predict(self, x) -> float:
        return predict(self, x)

    def predict_many(self, x: np.ndarray) -> np.ndarray:
        """Predictions for a batch of covariates, shape (n, d) -> (n,)."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ValueError(f"expected covariates of shape (n, {self.d}), got {x.shape}")
        return x @ self.theta


@dataclass(frozen=True)
class DistributionSpec:
    """Constants describing a data distribution.

    ``B`` bounds the covariate norm (||x||_2 <= B), ``K`` the parameter
    norm of the model class, ``lambda_min``/``lambda_max`` bound the
    eigenvalues of the second-moment matrix E[X X^T], and
    ``f_min``/``f_max`` bound the conditional label density on the label
    support [y_min, y_max].
    """

    B: float
    K: float
    d: int
    lambda_min: float
    lambda_max: float
    f_min: float
    f_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.B > 0 and self.K > 0 and self.d >= 1):
            raise ValueError("B, K must be positive and d >= 1")
        if not (0 < self.lambda_min <= self.lambda_max):
            raise ValueError("need 0 < lambda_min <= lambda_max")
        if self.lambda_max > self.B**2 * (1 + 1e-12):
            raise ValueError("lambda_max cannot exceed B^2 for covariates bounded by B")
        if not (0 < self.f_min <= self.f_max):
            raise ValueError("need 0 < f_min <= f_max")
        if not self.y_min < self.y_max:
            raise ValueError("need y_min < y_max")


def pinball_loss(t, y, gamma: float):
    """Pinball (quantile) loss, vectorized over broadcastable t and y.

    Returns gamma*(y-t) when y >= t and (1-gamma)*(t-y) otherwise; the
    result is nonnegative and zero exactly when t == y.
    """
    gamma = _check_gamma(gamma)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.where(y >= t, gamma * (y - t), (1.0 - gamma) * (t - y))
    if out.ndim == 0:
        return float(out)
    return out


def pinball_subgradient(theta, x, y: float, gamma: float) -> np.ndarray:
    """Per-sample stochastic subgradient (1{y < theta @ x} - gamma) * x."""
    gamma = _check_gamma(gamma)
    theta = _check_vector(theta, "theta")
    x = _check_vector(x, "x")
    if theta.shape != x.shape:
        raise ValueError(f"dimension mismatch: theta has {theta.shape[0]}, x has {x.shape[0]}")
    indicator = 1.0 if float(y) < float(theta @ x) else 0.0
    return (indicator - gamma) * x


def predict(model: LinearQuantileModel, x) -> float:
    """Evaluate t_gamma(x; theta) = theta @ x."""
    x = _check_vector(x)
    if x.shape[0] != model.d:
        raise ValueError(f"dimension mismatch: model has d={model.d}, x has d={x.shape[0]}")
    return float(model.theta @ x)

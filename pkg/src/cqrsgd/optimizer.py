"""Projected stochastic subgradient descent for the pinball objective.

The update is

    theta_{k+1} = Pi_K(theta_k - eta_k * g_k)

where g_k is the mini-batch average of per-sample pinball subgradients,
eta_k follows either an inverse-time schedule eta_k = c / k or a constant
schedule eta_k = c, and Pi_K is the Euclidean projection onto the ball
{||theta||_2 <= K} (skipped when no radius is configured). The step index
k counts mini-batch updates across epochs, starting at 1. theta_0 is the
zero vector, which lies inside every projection ball.

Each epoch visits the data once in a freshly drawn seeded permutation, so
a single epoch with batch size 1 realizes the classic one-pass stochastic
approximation scheme.

Learning rates are selected with successive halving: arms train on
geometrically doubling sample budgets and the better half (by held-out
mean pinball loss) survives each round, ties resolved toward the smaller
rate. Results are deterministic functions of (data, config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Dataset, _check_gamma, pinball_loss

__all__ = [
    "Schedule",
    "inverse_time",
    "constant",
    "SgdConfig",
    "TrainReport",
    "project_ball",
    "sgd_train",
    "successive_halving_tune",
]


@dataclass(frozen=True)
class Schedule:
    """Step-size schedule: ``inverse-time`` (c / k) or ``constant`` (c)."""

    kind: str
    c: float

    def __post_init__(self):
        if self.kind not in ("inverse-time", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not (float(self.c) > 0):
            raise ValueError("schedule rate c must be > 0")
        object.__setattr__(self, "c", float(self.c))

    def step_size(self, k: int) -> float:
        if self.kind == "inverse-time":
            return self.c / k
        return self.c


def inverse_time(c: float) -> Schedule:
    return Schedule("inverse-time", c)


def constant(c: float) -> Schedule:
    return Schedule("constant", c)


@dataclass(frozen=True)
class SgdConfig:
    """Configuration for one training run.

    ``projection_radius`` of ``None`` disables projection; experiments
    default to no projection while theory-verification runs enable it.
    """

    schedule: Schedule
    batch_size: int = 64
    epochs: int = 1
    projection_radius: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.projection_radius is not None and not (self.projection_radius > 0):
            raise ValueError("projection_radius must be positive when set")


@dataclass(frozen=True)
class TrainReport:
    """Final parameters plus the pre-update mean pinball loss per batch."""

    final_theta: np.ndarray
    steps: int
    mean_batch_loss_trace: np.ndarray

    def __post_init__(self):
        theta = np.array(self.final_theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "final_theta", theta)
        trace = np.array(self.mean_batch_loss_trace, dtype=float)
        trace.setflags(write=False)
        object.__setattr__(self, "mean_batch_loss_trace", trace)


def project_ball(theta, radius: float) -> np.ndarray:
    """Euclidean projection onto the ball {||v||_2 <= radius}."""
    if not (radius > 0):
        raise ValueError("projection radius must be positive")
    theta = np.asarray(theta, dtype=float)
    norm = float(np.linalg.norm(theta))
    if norm <= radius:
        return theta.copy()
    return theta * (radius / norm)


def sgd_train(data: Dataset, gamma: float, config: SgdConfig) -> TrainReport:
    """Minimize the empirical pinball objective by projected mini-batch SGD.

    Returns a report whose ``steps`` equals epochs * ceil(n / batch_size).
    Identical (data, gamma, config) produce bit-identical results.
    """
    gamma = _check_gamma(gamma)
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    n, bs = len(data), config.batch_size
    radius = config.projection_radius
    sched = config.schedule

    theta = np.zeros(data.d)
    losses = []
    k = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        xs = data.x[order]
        ys = data.y[order]
        for start in range(0, n, bs):
            xb = xs[start : start + bs]
            yb = ys[start : start + bs]
            pred = xb @ theta
            below = yb < pred
            losses.append(
                float(np.mean(np.where(below, (1.0 - gamma) * (pred - yb), gamma * (yb - pred))))
            )
            grad = (below - gamma) @ xb / xb.shape[0]
            k += 1
            theta = theta - sched.step_size(k) * grad
            if radius is not None:
                theta = project_ball(theta, radius)
    return TrainReport(theta, k, np.array(losses))


def _held_out_loss(theta: np.ndarray, val: Dataset, gamma: float) -> float:
    return float(np.mean(pinball_loss(val.x @ theta, val.y, gamma)))


def successive_halving_tune(
    data: Dataset,
    gamma: float,
    grid: Sequence[float],
    budget: int,
    seed: int,
    *,
    batch_size: int = 64,
    epochs: int = 1,
    projection_radius: float | None = None,
    val_fraction: float = 0.25,
    schedule_kind: str = "inverse-time",
) -> float:
    """Pick a learning rate from ``grid`` by successive halving.

    ``budget`` is the largest per-arm training-sample count (used in the
    final round; earlier rounds halve it repeatedly). A quarter of
    ``data`` is held out for scoring; the remainder is the training pool,
    shuffled once by ``seed``. All surviving arms in a round train on the
    same subset and seed so comparisons are paired. ``schedule_kind``
    selects the schedule the arms (and presumably the final fit) use.
    """
    gamma = _check_gamma(gamma)
    grid = [float(c) for c in grid]
    if not grid:
        raise ValueError("learning-rate grid must be nonempty")
    if any(c <= 0 for c in grid):
        raise ValueError("learning rates must be positive")
    if sorted(grid) != grid:
        raise ValueError("learning-rate grid must be sorted ascending")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if len(grid) == 1:
        return grid[0]
    if len(data) < 2:
        raise ValueError("need at least 2 samples to tune")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    n_val = min(len(data) - 1, max(1, int(round(val_fraction * len(data)))))
    val = data.subset(perm[:n_val])
    pool = data.subset(perm[n_val:])

    arms = list(enumerate(grid))
    rounds = max(1, math.ceil(math.log2(len(grid))))
    for r in range(rounds):
        b = max(1, min(len(pool), math.ceil(budget / 2 ** (rounds - 1 - r))))
        sub = pool.subset(np.arange(b))
        # Few arms remain in the late rounds, so sharpen their comparison
        # by averaging the held-out loss over a few training seeds.
        repeats = 3 if r >= rounds - 2 else 1
        seeds = [
            int(s)
            for s in np.random.SeedSequence(entropy=seed, spawn_key=(r,)).generate_state(repeats)
        ]
        scored = []
        for idx, rate in arms:
            loss = 0.0
            for train_seed in seeds:
                cfg = SgdConfig(
                    Schedule(schedule_kind, rate),
                    batch_size=batch_size,
                    epochs=epochs,
                    projection_radius=projection_radius,
                    seed=train_seed,
                )
                report = sgd_train(sub, gamma, cfg)
                loss += _held_out_loss(report.final_theta, val, gamma)
            scored.append((loss / repeats, rate, idx))
        scored.sort()
        keep = 1 if r == rounds - 1 else math.ceil(len(arms) / 2)
        arms = [(idx, rate) for _, rate, idx in scored[:keep]]
    return arms[0][1]

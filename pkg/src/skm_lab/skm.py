"""Relaxation schedules, Lambda-products, the SKM loop and the output index N_K."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .exceptions import InvalidInputError, NumericalError
from .operators import StochasticOperator, as_vector


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


class Schedule:
    """A relaxation sequence ``lambda_k`` with values in (0, 1)."""

    #: last admissible horizon, or None when the schedule is unbounded
    horizon: int | None = None

    def value(self, k: int) -> float:
        raise NotImplementedError

    def values(self, K: int) -> np.ndarray:
        """``lambda_0 .. lambda_{K-1}`` as an array."""
        self._check_horizon(K)
        return np.array([self.value(k) for k in range(K)], dtype=float)

    def _check_horizon(self, K):
        if K < 0:
            raise InvalidInputError("horizon must be nonnegative")
        if self.horizon is not None and K > self.horizon:
            raise InvalidInputError(
                f"schedule is defined for k < {self.horizon}, asked for horizon {K}"
            )


@dataclass(frozen=True)
class PowerDecay(Schedule):
    """``lambda_k = lam0 * (k+1)**(-a)``; square summable but not summable."""

    lam0: float
    a: float

    def __post_init__(self):
        if not 0 < self.lam0 < 1:
            raise InvalidInputError("PowerDecay needs lam0 in (0, 1)")
        if not 0.5 < self.a <= 1:
            raise InvalidInputError("PowerDecay needs a in (1/2, 1]")

    def value(self, k):
        if k < 0:
            raise InvalidInputError("k must be nonnegative")
        return self.lam0 * (k + 1) ** (-self.a)

    def values(self, K):
        self._check_horizon(K)
        return self.lam0 * np.arange(1, K + 1, dtype=float) ** (-self.a)


@dataclass(frozen=True)
class ConstantHorizon(Schedule):
    """Horizon-dependent constant ``lambda_k = lam0 / sqrt(K)`` for ``k < K``."""

    lam0: float
    K: int

    def __post_init__(self):
        if not self.lam0 > 0:
            raise InvalidInputError("ConstantHorizon needs lam0 > 0")
        if int(self.K) != self.K or self.K < 1:
            raise InvalidInputError("ConstantHorizon needs an integer horizon K >= 1")
        if not self.lam0 < math.sqrt(self.K):
            raise InvalidInputError("lam0 / sqrt(K) must be below 1")

    @property
    def horizon(self):
        return int(self.K)

    @property
    def level(self) -> float:
        return self.lam0 / math.sqrt(self.K)

    def value(self, k):
        if not 0 <= k < self.K:
            raise InvalidInputError(f"k={k} outside 0..{self.K - 1}")
        return self.level

    def values(self, K):
        self._check_horizon(K)
        return np.full(K, self.level)


@dataclass(frozen=True)
class Constant(Schedule):
    """Fixed ``lambda_k = value`` for every ``k`` (handy for hand-checkable cases)."""

    lam: float

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InvalidInputError("constant relaxation must lie in (0, 1)")

    def value(self, k):
        if k < 0:
            raise InvalidInputError("k must be nonnegative")
        return self.lam

    def values(self, K):
        self._check_horizon(K)
        return np.full(K, float(self.lam))


def relaxation(schedule: Schedule, k: int) -> float:
    """``lambda_k`` of ``schedule``."""
    return schedule.value(k)


# ---------------------------------------------------------------------------
# Lambda products and the random output index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaProducts:
    """``Lambda_0 .. Lambda_K`` with ``Lambda_{k+1} = Lambda_k / (1 + 8 lambda_k^2)``."""

    values: np.ndarray
    lambdas: np.ndarray

    @property
    def K(self) -> int:
        return self.values.size - 1

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def lower_bound(self) -> float:
        """``exp(-8 sum lambda_k^2)``, a lower bound for ``Lambda_K``."""
        return math.exp(-8.0 * float(np.sum(self.lambdas**2)))


def lambda_products(schedule: Schedule, K: int) -> LambdaProducts:
    if K < 1:
        raise InvalidInputError("horizon K must be at least 1")
    lam = schedule.values(K)
    vals = np.empty(K + 1)
    vals[0] = 1.0
    for k in range(K):
        vals[k + 1] = vals[k] / (1.0 + 8.0 * lam[k] ** 2)
    return LambdaProducts(vals, lam)


@dataclass(frozen=True)
class RandomIndexDistribution:
    """Law of the output index: ``P(N_K = k)`` proportional to ``Lambda_{k+1} lambda_k (1 - lambda_k)``."""

    probs: np.ndarray
    weights: np.ndarray

    @property
    def K(self) -> int:
        return self.probs.size


def random_index_distribution(schedule: Schedule, K: int) -> RandomIndexDistribution:
    prods = lambda_products(schedule, K)
    lam = prods.lambdas
    w = prods.values[1:] * lam * (1.0 - lam)
    return RandomIndexDistribution(w / w.sum(), w)


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """One seeded SKM run.

    ``iterates`` has shape ``(K+1, dim)``; ``scenarios[k]`` is the index drawn
    to produce ``iterates[k+1]``. ``residuals`` is filled only when requested.
    """

    iterates: np.ndarray
    scenarios: np.ndarray
    lambdas: np.ndarray
    seed: int
    residuals: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.scenarios.size

    @property
    def last(self) -> np.ndarray:
        return self.iterates[-1]


def draw_scenarios(op: StochasticOperator, K: int, seed: int) -> np.ndarray:
    """The i.i.d. scenario indices a run with this seed uses."""
    u = _rng.stream(seed, "trajectory").random(K)
    return op.scenarios.sample(u)


def run_skm(
    op: StochasticOperator,
    schedule: Schedule,
    x0,
    K: int,
    seed: int,
    record_residual: bool = False,
) -> Trajectory:
    """Iterate ``x_{k+1} = (1 - lambda_k) x_k + lambda_k T_{xi_k} x_k`` for ``K`` steps."""
    if K < 1:
        raise InvalidInputError("horizon K must be at least 1")
    x = as_vector(x0, op.dim)
    lam = schedule.values(K)
    xi = draw_scenarios(op, K, seed)
    xs = np.empty((K + 1, op.dim))
    xs[0] = x
    evaluate = op.rule.evaluate
    for k in range(K):
        x = (1.0 - lam[k]) * x + lam[k] * evaluate(int(xi[k]), x)
        xs[k + 1] = x
    if not np.all(np.isfinite(xs)):
        raise NumericalError("SKM iterates became non-finite")
    res = residual_path(op, xs) if record_residual else None
    return Trajectory(xs, xi, lam, int(seed), res)


def residual_path(op: StochasticOperator, iterates) -> np.ndarray:
    """``||T x_k - x_k||`` for every row of ``iterates``."""
    p = op.probs
    return np.array([np.linalg.norm(p @ op.images(x) - x) for x in np.asarray(iterates)])


def sample_output(traj: Trajectory, dist: RandomIndexDistribution, seed: int):
    """Draw ``N_K`` from ``dist`` on the output-index stream and return ``(k, x_k)``."""
    if dist.K > traj.K:
        raise InvalidInputError(
            f"index distribution has horizon {dist.K} but the trajectory only {traj.K} steps"
        )
    u = _rng.stream(seed, "output-index").random()
    k = int(min(np.searchsorted(np.cumsum(dist.probs), u, side="right"), dist.K - 1))
    return k, traj.iterates[k]


def running_min_residual(op: StochasticOperator, traj: Trajectory) -> np.ndarray:
    """Entry ``j`` is ``min_{k <= j} ||T x_k - x_k||`` (so entry ``K-1`` is the horizon-K value)."""
    res = traj.residuals if traj.residuals is not None else residual_path(op, traj.iterates)
    return np.minimum.accumulate(res)


def theoretical_residual_bound(
    schedule: Schedule, K: int, dist0_sq: float, sigma_star_sq: float
) -> float:
    """Upper bound on ``E ||T x_{N_K} - x_{N_K}||^2`` after ``K`` steps.

    ``(dist0_sq + 2 sigma^2 sum lambda_k^2) / (Lambda_K sum lambda_k (1 - lambda_k))``
    """
    if dist0_sq < 0 or sigma_star_sq < 0:
        raise InvalidInputError("squared distance and variance must be nonnegative")
    prods = lambda_products(schedule, K)
    lam = prods.lambdas
    num = dist0_sq + 2.0 * sigma_star_sq * float(np.sum(lam**2))
    return num / (prods.final * float(np.sum(lam * (1.0 - lam))))

"""Brute-force oracles and inequality checkers for SKM.

The exact oracle walks the whole scenario tree of an SKM run, so every
expectation it reports is a finite weighted sum, free of Monte Carlo error.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .exceptions import BudgetExceeded, InvalidInputError
from .operators import StochasticOperator, as_vector, residual, variance_at
from .reports import InequalityReport
from .skm import Schedule, lambda_products, random_index_distribution, run_skm

MARGIN_TOL = 1e-9
EQUALITY_TOL = 1e-10
PROB_SUM_TOL = 1e-10
FIXED_TOL = 1e-8
DEFAULT_BUDGET = 10**6


def _require_fixed(op, p, tol=FIXED_TOL):
    r = residual(op, p)
    if r > tol:
        raise InvalidInputError(f"supplied point is not a fixed point (residual {r:.3e} > {tol})")


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnumerationResult:
    """Exact path-weighted expectations of one SKM configuration.

    ``mean_sq_dist[k] = E ||x_k - p||^2`` for ``k <= K``,
    ``mean_sq_residual[k] = E ||T x_k - x_k||^2`` for ``k < K`` and
    ``output_residual_sq = E ||T x_{N_K} - x_{N_K}||^2``.
    ``step_margins[k]`` is the expected slack of the one-step decrease
    inequality at step ``k``; it is only filled when ``sigma_star_sq`` was
    given.
    """

    K: int
    mean_sq_dist: np.ndarray
    mean_sq_residual: np.ndarray
    output_probs: np.ndarray
    output_residual_sq: float
    path_count: int
    total_probability: float
    lambdas: np.ndarray
    step_margins: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "K": self.K,
            "path_count": self.path_count,
            "total_probability": self.total_probability,
            "mean_sq_dist": self.mean_sq_dist.tolist(),
            "mean_sq_residual": self.mean_sq_residual.tolist(),
            "output_probs": self.output_probs.tolist(),
            "output_residual_sq": self.output_residual_sq,
        }
        if self.step_margins is not None:
            out["step_margins"] = self.step_margins.tolist()
        return out


def enumerate_expectations(
    op: StochasticOperator,
    schedule: Schedule,
    x0,
    K: int,
    p,
    budget: int = DEFAULT_BUDGET,
    sigma_star_sq: float | None = None,
) -> EnumerationResult:
    """Expand every scenario path of length ``K`` and accumulate exact expectations.

    Nodes are expanded level by level in lexicographic path order, so the
    accumulation order (and therefore every rounding) is fixed.

    Raises
    ------
    BudgetExceeded
        If ``m**K`` exceeds ``budget``; the exception carries the required count.
    """
    if K < 1:
        raise InvalidInputError("horizon K must be at least 1")
    m = op.scenarios.size
    required = m**K
    if required > budget:
        raise BudgetExceeded(required, budget)
    x0 = as_vector(x0, op.dim)
    p = as_vector(p, op.dim)
    if sigma_star_sq is not None:
        _require_fixed(op, p)
    lam = schedule.values(K)
    probs = op.probs

    states = x0[None, :]
    weights = np.ones(1)
    sq_dist = np.empty(K + 1)
    sq_res = np.empty(K)
    margins = np.empty(K) if sigma_star_sq is not None else None
    for k in range(K):
        imgs = np.stack([op.images(x) for x in states])  # (N, m, n)
        Tx = np.einsum("i,nid->nd", probs, imgs)
        d = np.sum((states - p) ** 2, axis=1)
        r2 = np.sum((Tx - states) ** 2, axis=1)
        children = (1.0 - lam[k]) * states[:, None, :] + lam[k] * imgs
        sq_dist[k] = weights @ d
        sq_res[k] = weights @ r2
        if margins is not None:
            lhs = np.sum((children - p) ** 2, axis=2) @ probs
            rhs = (1 + 8 * lam[k] ** 2) * d - lam[k] * (1 - lam[k]) * r2 + 2 * lam[k] ** 2 * sigma_star_sq
            margins[k] = weights @ (rhs - lhs)
        states = children.reshape(-1, op.dim)
        weights = (weights[:, None] * probs[None, :]).ravel()
    sq_dist[K] = weights @ np.sum((states - p) ** 2, axis=1)
    total = float(weights.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise InvalidInputError(f"path probabilities sum to {total!r}")
    dist = random_index_distribution(schedule, K)
    return EnumerationResult(
        K=K,
        mean_sq_dist=sq_dist,
        mean_sq_residual=sq_res,
        output_probs=dist.probs,
        output_residual_sq=float(dist.probs @ sq_res),
        path_count=required,
        total_probability=total,
        lambdas=lam,
        step_margins=margins,
    )


def telescoped_gap(enum: EnumerationResult, dist0_sq: float, sigma_star_sq: float):
    """Both sides of the Lambda-weighted telescope of the decrease inequality.

    Returns ``(weighted_margins, closed_form)`` where the first is
    ``sum_k Lambda_{k+1} E[margin_k]`` and the second is
    ``d0 + 2 sigma^2 sum Lambda_{k+1} lambda_k^2 - Lambda_K E d_K - sum_k w_k E r_k^2``
    with ``w_k = Lambda_{k+1} lambda_k (1 - lambda_k)``. They agree exactly
    in exact arithmetic.
    """
    if enum.step_margins is None:
        raise InvalidInputError("enumeration was run without sigma_star_sq")
    lam = enum.lambdas
    Lam = np.empty(enum.K + 1)
    Lam[0] = 1.0
    for k in range(enum.K):
        Lam[k + 1] = Lam[k] / (1 + 8 * lam[k] ** 2)
    weighted = float(Lam[1:] @ enum.step_margins)
    closed = (
        dist0_sq
        + 2 * sigma_star_sq * float(Lam[1:] @ lam**2)
        - Lam[-1] * enum.mean_sq_dist[-1]
        - float((Lam[1:] * lam * (1 - lam)) @ enum.mean_sq_residual)
    )
    return weighted, closed


# ---------------------------------------------------------------------------
# Inequality checks
# ---------------------------------------------------------------------------


def check_decrease_inequality(
    op: StochasticOperator,
    p,
    states,
    lam: float,
    sigma_star_sq: float,
    tolerance: float = MARGIN_TOL,
) -> InequalityReport:
    """One-step decrease inequality at every state, with the exact conditional expectation.

    ``E ||x+ - p||^2 <= (1 + 8 lam^2) ||x - p||^2 - lam (1 - lam) ||Tx - x||^2 + 2 lam^2 sigma^2``
    """
    if not 0 < lam < 1:
        raise InvalidInputError("lam must lie in (0, 1)")
    p = as_vector(p, op.dim)
    _require_fixed(op, p)
    probs = op.probs
    margins = []
    for x in np.atleast_2d(np.asarray(states, dtype=float)):
        x = as_vector(x, op.dim)
        imgs = op.images(x)
        Tx = probs @ imgs
        nxt = (1 - lam) * x + lam * imgs
        lhs = probs @ np.sum((nxt - p) ** 2, axis=1)
        d = float(np.sum((x - p) ** 2))
        r2 = float(np.sum((Tx - x) ** 2))
        rhs = (1 + 8 * lam**2) * d - lam * (1 - lam) * r2 + 2 * lam**2 * sigma_star_sq
        margins.append(rhs - lhs)
    return InequalityReport("decrease_inequality", margins, tolerance)


def check_variance_transfer(
    op: StochasticOperator, p, sigma_star_sq: float, points, tolerance: float = MARGIN_TOL
) -> InequalityReport:
    """``E ||(T_xi - T) x||^2 <= 2 sigma^2 + 8 ||x - p||^2`` at every point."""
    p = as_vector(p, op.dim)
    _require_fixed(op, p)
    margins = [
        2 * sigma_star_sq + 8 * float(np.sum((x - p) ** 2)) - variance_at(op, x)
        for x in np.atleast_2d(np.asarray(points, dtype=float))
    ]
    return InequalityReport("variance_transfer", margins, tolerance)


def check_variance_constancy(
    op: StochasticOperator, fixed_points, tolerance: float = EQUALITY_TOL
) -> InequalityReport:
    """The oracle variance takes the same value at every supplied fixed point.

    One case per pair; margin ``-|v_i - v_j|``.
    """
    pts = np.atleast_2d(np.asarray(fixed_points, dtype=float))
    for q in pts:
        _require_fixed(op, q)
    v = [variance_at(op, q) for q in pts]
    margins = [-abs(a - b) for a, b in combinations(v, 2)]
    return InequalityReport("variance_constancy", margins, tolerance)


def check_residual_bound(
    enum: EnumerationResult, bound: float, K: int | None = None, tolerance: float = MARGIN_TOL
) -> InequalityReport:
    """``bound - E ||T x_{N_K} - x_{N_K}||^2`` from an exact enumeration."""
    if K is not None and K != enum.K:
        raise InvalidInputError(f"bound is for horizon {K}, enumeration for {enum.K}")
    return InequalityReport("residual_bound", [bound - enum.output_residual_sq], tolerance)


def check_bounded_iterates(
    op: StochasticOperator,
    schedule: Schedule,
    x0,
    p,
    sigma_star_sq: float,
    K: int,
    seeds,
    every: int = 1,
) -> InequalityReport:
    """Monte Carlo version of the uniform bound on ``E ||x_k - p||^2``.

    Margin at step ``k``: ``Lambda_k^{-1} (d0 + 2 sigma^2 sum_{i<k} lambda_i^2) + 3 SE - mean``.
    """
    x0 = as_vector(x0, op.dim)
    p = as_vector(p, op.dim)
    runs = np.stack(
        [np.sum((run_skm(op, schedule, x0, K, s).iterates[::every] - p) ** 2, axis=1) for s in seeds]
    )
    mean = runs.mean(axis=0)
    se = runs.std(axis=0, ddof=1) / np.sqrt(runs.shape[0])
    prods = lambda_products(schedule, K)
    cum = np.concatenate([[0.0], np.cumsum(prods.lambdas**2)])
    bound = (float(np.sum((x0 - p) ** 2)) + 2 * sigma_star_sq * cum) / prods.values
    return InequalityReport("bounded_iterates", bound[::every] + 3 * se - mean, 0.0)


def monte_carlo_sq_dist(op: StochasticOperator, schedule: Schedule, x0, K: int, p, seeds):
    """Sample mean and standard error of ``||x_K - p||^2`` across seeded runs."""
    p = as_vector(p, op.dim)
    vals = np.array([np.sum((run_skm(op, schedule, x0, K, s).last - p) ** 2) for s in seeds])
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size))


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Ordinary least-squares line through ``(log K, log value)``."""

    log_K: np.ndarray
    log_values: np.ndarray
    slope: float
    intercept: float
    r_squared: float


def fit_rate(Ks, values) -> RateFit:
    Ks = np.asarray(Ks, dtype=float)
    values = np.asarray(values, dtype=float)
    if Ks.shape != values.shape or Ks.size < 3:
        raise InvalidInputError("need at least three (K, value) pairs")
    if np.any(values <= 0) or np.any(Ks <= 0):
        raise InvalidInputError("horizons and values must be positive")
    lx, ly = np.log(Ks), np.log(values)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum((ly - fitted) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(lx, ly, float(slope), float(intercept), r2)


@dataclass(frozen=True)
class PowerSequence:
    """The sequence ``coef * (k+1)**(-exponent)``, ``k >= 0``.

    Summability questions about such sequences have closed-form answers,
    which is what lets the running-min diagnostic validate its hypotheses.
    """

    coef: float
    exponent: float = 0.0

    def __post_init__(self):
        if self.coef < 0:
            raise InvalidInputError("sequences must be nonnegative")

    def values(self, K: int) -> np.ndarray:
        return self.coef * np.arange(1, K + 1, dtype=float) ** (-self.exponent)

    @property
    def is_zero(self) -> bool:
        return self.coef == 0

    def diverges(self) -> bool:
        return not self.is_zero and self.exponent <= 1


def check_weighted_min_vanishing(
    eta: PowerSequence, x: PowerSequence, K_max: int, grid_size: int = 40
) -> InequalityReport:
    """Numerical look at ``min_{k<K} x_k = o(1 / sum_{k<K} eta_k)``.

    Evaluates ``S_K m_K`` on a geometric grid of horizons up to ``K_max`` and
    passes when its value at ``K_max`` is at most half its maximum over the
    grid. This is a diagnostic; no finite horizon certifies a little-o claim.
    """
    if K_max < 2:
        raise InvalidInputError("K_max must be at least 2")
    if not eta.diverges():
        raise InvalidInputError("weights must have a divergent sum")
    if not (x.is_zero or eta.exponent + x.exponent > 1):
        raise InvalidInputError("sum of eta_k x_k must be finite")
    S = np.cumsum(eta.values(K_max))
    m = np.minimum.accumulate(x.values(K_max))
    grid = np.unique(np.geomspace(1, K_max, grid_size).round().astype(int))
    prod = S[grid - 1] * m[grid - 1]
    return InequalityReport("weighted_min_vanishing", [0.5 * prod.max() - prod[-1]], 0.0)

"""Built-in problem instances with known fixed points and oracle variances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError
from .operators import (
    AffineMap,
    AffineNormalCone,
    BoxNormalCone,
    GradientStep,
    Identity,
    QuadraticFamily,
    ScenarioSet,
    StochasticOperator,
    Translation,
    variance_at,
)
from .problems import (
    SgdProblem,
    StosProblem,
    build_sgd_operator,
    build_stos_operator,
    solve_reference,
)


@dataclass(frozen=True)
class Instance:
    """An operator together with a starting point and a known fixed point ``p``."""

    name: str
    op: StochasticOperator
    x0: np.ndarray
    p: np.ndarray
    sigma_star_sq: float
    problem: object = None
    x_star: np.ndarray | None = None

    @property
    def dist0_sq(self) -> float:
        return float(np.sum((self.x0 - self.p) ** 2))


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


def identity(dim: int = 2, x0=(1.0, 2.0)) -> Instance:
    x0 = _vec(x0)
    op = StochasticOperator(Identity(dim))
    return Instance("identity", op, x0, x0.copy(), 0.0)


def negation(x0=1.0) -> Instance:
    """Deterministic ``T x = -x`` on the real line; Fix(T) = {0}."""
    op = StochasticOperator(AffineMap([[-1.0]], [0.0]))
    return Instance("negation", op, _vec(x0), np.zeros(1), 0.0)


def translation(shifts=(1.0, -1.0), probs=None, x0=0.0) -> Instance:
    """``T_i x = x + b_i``; with zero-mean shifts ``T`` is the identity."""
    shifts = np.asarray(shifts, dtype=float)
    op = StochasticOperator(Translation(shifts), probs)
    mean = op.probs @ op.rule.shifts
    if np.linalg.norm(mean) > 1e-12:
        raise InvalidInputError("shifts must have zero mean for T to have fixed points")
    x0 = _vec(x0)
    return Instance("translation", op, x0, x0.copy(), variance_at(op, x0))


def sgd1d(gamma=0.5, centers=(-1.0, 1.0), probs=None, x0=1.0) -> Instance:
    """SGD on ``f_i(x) = 1/2 (x - a_i)^2`` in one dimension."""
    fam = QuadraticFamily.centered(list(centers))
    prob = SgdProblem(fam, gamma, probs)
    sol = solve_reference(prob)
    return Instance("sgd1d", build_sgd_operator(prob), _vec(x0), sol.p, sol.sigma_star_sq, prob, sol.x_star)


def fixed_line2d(gamma=0.5, centers=(-1.0, 1.0), probs=None, x0=(1.0, 1.0)) -> Instance:
    """SGD on ``f_i(x) = 1/2 (x_1 - a_i)^2`` in the plane: Fix(T) is the line ``x_1 = mean(a)``."""
    fam = QuadraticFamily([[[1.0, 0.0]]] * len(centers), [[c] for c in centers])
    prob = SgdProblem(fam, gamma, probs)
    sol = solve_reference(prob)
    return Instance("fixed-line2d", build_sgd_operator(prob), _vec(x0), sol.p, sol.sigma_star_sq, prob, sol.x_star)


def fixed_line_points(inst: Instance, count: int = 10, spread: float = 5.0) -> np.ndarray:
    """Points of the fixed line of :func:`fixed_line2d` (second coordinate varied)."""
    pts = np.tile(inst.p, (count, 1))
    pts[:, 1] = np.linspace(-spread, spread, count)
    return pts


def random_least_squares(n: int = 3, m: int = 5, seed: int = 0, noise: float = 0.5, gamma=None) -> Instance:
    """SGD on ``f_i(x) = 1/2 (<a_i, x> - b_i)^2`` for a seeded random ``m x n`` system."""
    if n < 1 or m < n:
        raise InvalidInputError("need m >= n >= 1 so the minimiser is unique")
    g = np.random.default_rng(seed)
    A = g.normal(size=(m, n))
    b = A @ g.normal(size=n) + noise * g.normal(size=m)
    fam = QuadraticFamily([row[None, :] for row in A], [[v] for v in b])
    if gamma is None:
        gamma = 1.0 / fam.smoothness
    prob = SgdProblem(fam, gamma)
    sol = solve_reference(prob)
    return Instance("lsq", build_sgd_operator(prob), np.zeros(n), sol.p, sol.sigma_star_sq, prob, sol.x_star)


def sgd_invalid(gamma=3.0) -> Instance:
    """A gradient step with ``gamma > 2/L``: *not* nonexpansive, for checker sensitivity."""
    fam = QuadraticFamily.centered([0.0])
    op = StochasticOperator(GradientStep(gamma, fam))
    return Instance("sgd-invalid", op, _vec(1.0), np.zeros(1), 0.0)


def constrained_least_squares(seed: int = 7, m: int = 4, n: int = 3, box: float = 10.0) -> Instance:
    """Stochastic least squares under ``sum(x) = 1`` and an inactive box.

    ``A`` is the box normal cone, ``B`` the normal cone of the hyperplane and
    ``C_i`` the gradients of ``1/2 ||A_i x - b_i||^2``; ``rho`` equals ``tau``.
    """
    g = np.random.default_rng(seed)
    mats = [np.eye(n) + 0.2 * g.normal(size=(n, n)) for _ in range(m)]
    base = g.normal(size=n)
    targets = [base + 0.3 * g.normal(size=n) for _ in range(m)]
    C = QuadraticFamily(mats, targets)
    A = BoxNormalCone(-box * np.ones(n), box * np.ones(n))
    B = AffineNormalCone(np.ones((1, n)), [1.0])
    prob = StosProblem(A, B, C, rho=C.cocoercivity, probs=ScenarioSet.uniform(m))
    sol = solve_reference(prob)
    return Instance("stos-eqls", build_stos_operator(prob), np.zeros(n), sol.p, sol.sigma_star_sq, prob, sol.x_star)


BUILDERS = {
    "identity": identity,
    "negation": negation,
    "translation": translation,
    "sgd1d": sgd1d,
    "fixed-line2d": fixed_line2d,
    "lsq": random_least_squares,
    "stos-eqls": constrained_least_squares,
    "sgd-invalid": sgd_invalid,
}


def build(name: str, **params) -> Instance:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise InvalidInputError(f"unknown problem {name!r}; choose from {sorted(BUILDERS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for {name!r}: {exc}") from None

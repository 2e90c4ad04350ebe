"""SGD and stochastic three-operator splitting cast as stochastic fixed-point problems."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, OracleFailure
from .operators import (
    DavisYinComposite,
    GradientFamily,
    GradientStep,
    MonotoneOperator,
    QuadraticFamily,
    ScenarioSet,
    StochasticOperator,
    as_vector,
    residual,
    variance_at,
)


def _scenarios(probs, size):
    return ScenarioSet.uniform(size) if probs is None else ScenarioSet(probs)


@dataclass(frozen=True)
class SgdProblem:
    """Minimise ``E f_xi`` with the stochastic gradient step ``T_i = I - gamma grad f_i``.

    ``gamma`` must lie in ``(0, 2/L)`` where ``L`` is the largest component
    smoothness constant; this is what makes every ``T_i`` nonexpansive.
    """

    family: GradientFamily
    gamma: float
    probs: ScenarioSet = None

    def __post_init__(self):
        object.__setattr__(self, "probs", _scenarios(self.probs, self.family.size))
        if self.probs.size != self.family.size:
            raise InvalidInputError("one probability per component required")
        L = self.family.smoothness
        if not 0 < self.gamma < 2.0 / L:
            raise InvalidInputError(f"step gamma={self.gamma} outside (0, 2/L) with L={L}")

    @property
    def L(self) -> float:
        return self.family.smoothness


@dataclass(frozen=True)
class StosProblem:
    """Find a zero of ``A + B + E C_xi`` with the stochastic Davis-Yin operator.

    ``B`` must have a convex graph; the catalog offers affine-subspace normal
    cones (and the zero operator, the normal cone of the whole space).
    """

    A: MonotoneOperator
    B: MonotoneOperator
    C: GradientFamily
    rho: float
    probs: ScenarioSet = None

    def __post_init__(self):
        object.__setattr__(self, "probs", _scenarios(self.probs, self.C.size))
        if self.probs.size != self.C.size:
            raise InvalidInputError("one probability per gradient component required")
        if not self.A.dim == self.B.dim == self.C.dim:
            raise InvalidInputError("A, B and C must act on the same space")
        if not self.B.graph_convex:
            raise InvalidInputError(
                "B must have a convex graph (affine-subspace normal cone or zero operator)"
            )
        if not 0 < self.rho < 2.0 * self.tau:
            raise InvalidInputError(f"rho={self.rho} outside (0, 2 tau) with tau={self.tau}")

    @property
    def tau(self) -> float:
        return self.C.cocoercivity

    @property
    def dim(self) -> int:
        return self.C.dim


@dataclass(frozen=True)
class KnownSolution:
    """Ground truth for a problem: solution, fixed point of ``T`` and ``sigma_*^2``."""

    x_star: np.ndarray
    p: np.ndarray
    sigma_star_sq: float
    dist0_sq: float | None = None
    info: dict = field(default_factory=dict)

    def with_start(self, x0) -> "KnownSolution":
        x0 = np.asarray(x0, dtype=float)
        d = float(np.sum((x0 - self.p) ** 2))
        return KnownSolution(self.x_star, self.p, self.sigma_star_sq, d, self.info)


def build_sgd_operator(prob: SgdProblem) -> StochasticOperator:
    return StochasticOperator(GradientStep(prob.gamma, prob.family), prob.probs)


def build_stos_operator(prob: StosProblem) -> StochasticOperator:
    return StochasticOperator(DavisYinComposite(prob.rho, prob.A, prob.B, prob.C), prob.probs)


def stos_step(prob: StosProblem, x, scenario: int, lam: float):
    """One STOS update; returns ``(y, z, x_next)``.

    ``y = J_{rho A} x``, ``z = J_{rho B}(2y - x - rho C_i y)`` and
    ``x_next = x - lam (y - z)``.
    """
    if not 0 < lam < 1:
        raise InvalidInputError("relaxation must lie in (0, 1)")
    if not 0 <= scenario < prob.probs.size:
        raise InvalidInputError(f"scenario {scenario} out of range")
    x = as_vector(x, prob.dim)
    y = prob.A.resolvent(x, prob.rho)
    z = prob.B.resolvent(2 * y - x - prob.rho * prob.C.gradient(int(scenario), y), prob.rho)
    return y, z, x - lam * (y - z)


class _ExpectedGradient(GradientFamily):
    """Single-component family whose gradient is ``E grad f_xi``."""

    def __init__(self, family: GradientFamily, probs):
        self.family, self.probs = family, np.asarray(probs)
        self.dim, self.size = family.dim, 1

    def gradient(self, i, x):
        return self.family.expected_gradient(self.probs, x)

    @property
    def smoothness(self):
        return self.family.smoothness


def _solve_sgd(prob: SgdProblem, tol, max_iter):
    fam, probs = prob.family, prob.probs.probs
    if isinstance(fam, QuadraticFamily):
        H, g = fam.hessian(probs), fam.linear_term(probs)
        x, *_ = np.linalg.lstsq(H, g, rcond=None)
        gnorm = float(np.linalg.norm(H @ x - g))
        if gnorm > max(tol, 1e-9 * (1 + np.linalg.norm(g))):
            raise OracleFailure(f"normal equations inconsistent (gradient norm {gnorm:.3e})")
        return x, {"method": "normal-equations", "grad_norm": gnorm}
    x = np.zeros(fam.dim)
    step = 1.0 / fam.smoothness
    for it in range(max_iter):
        grad = fam.expected_gradient(probs, x)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return x, {"method": "gradient-descent", "iterations": it, "grad_norm": gnorm}
        x = x - step * grad
    raise OracleFailure(f"gradient descent did not reach tol={tol} in {max_iter} iterations")


def _solve_stos(prob: StosProblem, tol, max_iter):
    det = DavisYinComposite(prob.rho, prob.A, prob.B, _ExpectedGradient(prob.C, prob.probs.probs))
    x = np.zeros(prob.dim)
    for it in range(max_iter):
        y, z = det.split(0, x)
        gap = float(np.linalg.norm(y - z))
        if gap <= tol:
            return x, y, {"method": "davis-yin", "iterations": it, "gap": gap}
        x = x - y + z
    raise OracleFailure(f"Davis-Yin reference did not reach tol={tol} in {max_iter} iterations")


def solve_reference(prob, tol: float = 1e-12, max_iter: int = 1_000_000, x0=None) -> KnownSolution:
    """Independent ground truth for an :class:`SgdProblem` or :class:`StosProblem`.

    SGD uses the normal equations for quadratics and full-gradient descent
    otherwise. STOS runs the deterministic Davis-Yin iteration with the exact
    expected ``C`` until ``||y - z|| <= tol``; its limit is a fixed point of
    the stochastic operator's expectation as well, since both share the lift
    of every zero.
    """
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    if isinstance(prob, SgdProblem):
        x_star, info = _solve_sgd(prob, tol, max_iter)
        p = x_star
        op = build_sgd_operator(prob)
    elif isinstance(prob, StosProblem):
        p, x_star, info = _solve_stos(prob, tol, max_iter)
        op = build_stos_operator(prob)
    else:
        raise InvalidInputError(f"unsupported problem type {type(prob).__name__}")
    sol = KnownSolution(x_star, p, variance_at(op, p), info=info)
    return sol.with_start(x0) if x0 is not None else sol


def lift_zero_to_fixed_point(prob: StosProblem, z, a, tol: float = 1e-8) -> np.ndarray:
    """Map a zero ``z`` with certificate ``a`` in ``A(z)`` to the fixed point ``z + rho a``."""
    z = as_vector(z, prob.dim)
    a = as_vector(a, prob.dim)
    if not prob.A.contains(z, a, tol):
        raise InvalidInputError("certificate a is not in A(z)")
    return z + prob.rho * a


def zero_certificate(prob: StosProblem, x, tol: float = 1e-8):
    """Decode ``x`` into ``v = J_{rho A} x`` and check ``0 in A v + B v + C v``.

    Returns ``(v, a, b, ok)`` with ``a = (x - v)/rho`` in ``A v`` by
    construction and ``b = -a - C v`` tested for membership in ``B v``.
    """
    x = as_vector(x, prob.dim)
    v = prob.A.resolvent(x, prob.rho)
    a = (x - v) / prob.rho
    b = -a - prob.C.expected_gradient(prob.probs.probs, v)
    return v, a, b, prob.B.contains(v, b, tol)


def sgd_variance_identity(prob: SgdProblem, x_star) -> float:
    """``gamma^2 E ||grad f_xi(x*)||^2``, the closed form of the SGD oracle variance at a minimiser."""
    probs = prob.probs.probs
    return prob.gamma**2 * sum(
        p * float(np.sum(prob.family.gradient(i, x_star) ** 2)) for i, p in enumerate(probs)
    )


def stos_variance_bound(prob: StosProblem, x_star) -> float:
    """``rho^2 E ||C x* - C_xi x*||^2``, which dominates the STOS oracle variance at ``p``."""
    probs = prob.probs.probs
    mean = prob.C.expected_gradient(probs, x_star)
    return prob.rho**2 * sum(
        p * float(np.sum((prob.C.gradient(i, x_star) - mean) ** 2)) for i, p in enumerate(probs)
    )


def is_fixed(op: StochasticOperator, p, tol: float = 1e-8) -> bool:
    return residual(op, p) <= tol


"""Vectors, finite scenario distributions and stochastic nonexpansive operators.

A :class:`StochasticOperator` is a family ``{T_i}`` indexed by the scenarios of
a :class:`ScenarioSet`. Every operator is assembled from small evaluation
blocks (gradient steps, resolvents, affine maps, translations, convex
combinations, compositions and the Davis-Yin composite). Expectations over
scenarios are always full enumerations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import InvalidInputError
from .reports import InequalityReport

PROB_TOL = 1e-12
NONEXPANSIVE_TOL = 1e-9


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Return ``x`` as a finite 1-D float array, optionally checking its length."""
    v = np.array(x, dtype=float, copy=True)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("vector has non-finite coordinates")
    if dim is not None and v.size != dim:
        raise InvalidInputError(f"dimension mismatch: expected {dim}, got {v.size}")
    v.setflags(write=False)
    return v


def _as_matrix(M, name="matrix") -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} must be a finite 2-D array")
    return M


@dataclass(frozen=True)
class ScenarioSet:
    """Finite probability distribution over scenario indices ``0..m-1``."""

    probs: np.ndarray

    def __post_init__(self):
        src = self.probs.probs if isinstance(self.probs, ScenarioSet) else self.probs
        p = np.array(src, dtype=float).ravel()
        if p.size == 0:
            raise InvalidInputError("scenario set must have at least one scenario")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidInputError("scenario probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise InvalidInputError(f"scenario probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, m: int) -> "ScenarioSet":
        return cls(np.full(m, 1.0 / m))

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def sample(self, u):
        """Map uniform draws ``u`` in [0, 1) to scenario indices by inverse CDF.

        The chosen index is the first one whose cumulative weight exceeds ``u``.
        """
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, u, side="right")
        # cdf[-1] can fall a hair below 1 after rounding
        return np.minimum(idx, self.size - 1)


# ---------------------------------------------------------------------------
# Gradient families (closed-form gradients of smooth convex components)
# ---------------------------------------------------------------------------


class GradientFamily:
    """Base class: ``m`` smooth convex components ``f_i`` on ``R^dim``."""

    dim: int
    size: int

    def value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def smoothness(self) -> float:
        """Largest Lipschitz constant of the component gradients."""
        raise NotImplementedError

    @property
    def cocoercivity(self) -> float:
        # Baillon-Haddad: gradient of a convex L-smooth function is 1/L-cocoercive
        return 1.0 / self.smoothness

    def expected_gradient(self, probs, x) -> np.ndarray:
        return sum(p * self.gradient(i, x) for i, p in enumerate(probs))


class QuadraticFamily(GradientFamily):
    """Least-squares components ``f_i(x) = 1/2 ||A_i x - b_i||^2``."""

    def __init__(self, matrices: Sequence, targets: Sequence):
        if len(matrices) != len(targets) or len(matrices) == 0:
            raise InvalidInputError("need one target per matrix and at least one component")
        self.matrices = [_as_matrix(A, "A_i") for A in matrices]
        self.targets = [np.atleast_1d(np.array(b, dtype=float)) for b in targets]
        self.dim = self.matrices[0].shape[1]
        self.size = len(self.matrices)
        for A, b in zip(self.matrices, self.targets):
            if A.shape[1] != self.dim or A.shape[0] != b.size:
                raise InvalidInputError("inconsistent component shapes")
        self._gram = [A.T @ A for A in self.matrices]
        self._lin = [A.T @ b for A, b in zip(self.matrices, self.targets)]

    @classmethod
    def centered(cls, centers) -> "QuadraticFamily":
        """Components ``1/2 ||x - c_i||^2`` for the rows ``c_i`` of ``centers``."""
        centers = np.atleast_2d(np.array(centers, dtype=float))
        if centers.shape[0] == 1 and centers.shape[1] > 1:
            # a flat list of scalars means 1-D centres
            centers = centers.T
        n = centers.shape[1]
        return cls([np.eye(n)] * centers.shape[0], list(centers))

    def value(self, i, x):
        r = self.matrices[i] @ x - self.targets[i]
        return 0.5 * float(r @ r)

    def gradient(self, i, x):
        return self._gram[i] @ x - self._lin[i]

    @property
    def smoothness(self):
        return max(float(np.linalg.eigvalsh(G)[-1]) for G in self._gram)

    def hessian(self, probs) -> np.ndarray:
        return sum(p * G for p, G in zip(probs, self._gram))

    def linear_term(self, probs) -> np.ndarray:
        return sum(p * c for p, c in zip(probs, self._lin))


class LogisticFamily(GradientFamily):
    """Components ``log(1 + exp(-y_i <a_i, x>)) + mu/2 ||x||^2`` with labels in {-1, +1}."""

    def __init__(self, features, labels, l2: float = 0.0):
        self.features = _as_matrix(features, "features")
        self.labels = np.array(labels, dtype=float).ravel()
        if self.labels.size != self.features.shape[0]:
            raise InvalidInputError("one label per feature row required")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise InvalidInputError("labels must be -1 or +1")
        if l2 < 0:
            raise InvalidInputError("l2 weight must be nonnegative")
        self.l2 = float(l2)
        self.size, self.dim = self.features.shape

    def value(self, i, x):
        t = -self.labels[i] * (self.features[i] @ x)
        return float(np.logaddexp(0.0, t)) + 0.5 * self.l2 * float(x @ x)

    def gradient(self, i, x):
        a, y = self.features[i], self.labels[i]
        t = -y * (a @ x)
        # sigmoid(t) evaluated without overflow
        s = np.exp(-np.logaddexp(0.0, -t))
        return -y * s * a + self.l2 * x

    @property
    def smoothness(self):
        return float(np.max(np.sum(self.features**2, axis=1))) / 4.0 + self.l2


# ---------------------------------------------------------------------------
# Maximally monotone operators with closed-form resolvents
# ---------------------------------------------------------------------------


class MonotoneOperator:
    """A maximally monotone operator known through its resolvent ``(I + rho A)^-1``."""

    dim: int
    graph_convex = False

    def resolvent(self, x: np.ndarray, rho: float) -> np.ndarray:
        raise NotImplementedError

    def contains(self, z, a, tol: float = 1e-8) -> bool:
        """Whether ``a`` belongs to ``A(z)`` (graph membership), up to ``tol``."""
        raise NotImplementedError


class ZeroOperator(MonotoneOperator):
    graph_convex = True

    def __init__(self, dim: int):
        self.dim = int(dim)

    def resolvent(self, x, rho):
        return np.array(x, dtype=float)

    def contains(self, z, a, tol=1e-8):
        return bool(np.linalg.norm(a) <= tol)


class BoxNormalCone(MonotoneOperator):
    """Normal cone of the box ``[lower, upper]``; its resolvent is the clamp."""

    def __init__(self, lower, upper):
        self.lower = np.array(lower, dtype=float).ravel()
        self.upper = np.array(upper, dtype=float).ravel()
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise InvalidInputError("box bounds must have equal length and lower <= upper")
        self.dim = self.lower.size

    def resolvent(self, x, rho):
        return np.clip(x, self.lower, self.upper)

    def contains(self, z, a, tol=1e-8):
        z, a = np.asarray(z, float), np.asarray(a, float)
        if np.any(z < self.lower - tol) or np.any(z > self.upper + tol):
            return False
        at_lo = np.abs(z - self.lower) <= tol
        at_hi = np.abs(z - self.upper) <= tol
        ok = np.where(
            at_lo & at_hi,
            True,
            np.where(at_lo, a <= tol, np.where(at_hi, a >= -tol, np.abs(a) <= tol)),
        )
        return bool(np.all(ok))


class AffineNormalCone(MonotoneOperator):
    """Normal cone of ``{x : M x = c}``; the resolvent is the orthogonal projection.

    The graph of this operator is a linear-affine set, hence convex.
    """

    graph_convex = True

    def __init__(self, M, c, tol: float = 1e-10):
        self.M = _as_matrix(M, "M")
        self.c = np.atleast_1d(np.array(c, dtype=float))
        if self.c.size != self.M.shape[0]:
            raise InvalidInputError("need one right-hand side per constraint row")
        self.dim = self.M.shape[1]
        self._pinv = np.linalg.pinv(self.M)
        if np.linalg.norm(self.M @ (self._pinv @ self.c) - self.c) > tol * (1 + np.linalg.norm(self.c)):
            raise InvalidInputError("affine constraints M x = c are inconsistent")
        # projector onto the row space of M
        self._row_proj = self._pinv @ self.M

    def resolvent(self, x, rho):
        return x - self._pinv @ (self.M @ x - self.c)

    def contains(self, z, a, tol=1e-8):
        z, a = np.asarray(z, float), np.asarray(a, float)
        feasible = np.linalg.norm(self.M @ z - self.c) <= tol
        normal = np.linalg.norm(a - self._row_proj @ a) <= tol * (1 + np.linalg.norm(a))
        return bool(feasible and normal)


class BallNormalCone(MonotoneOperator):
    """Normal cone of the Euclidean ball of given ``radius`` around ``center``."""

    def __init__(self, radius: float, center=None, dim: int | None = None):
        if radius <= 0:
            raise InvalidInputError("ball radius must be positive")
        if center is None:
            if dim is None:
                raise InvalidInputError("give a center or a dimension")
            center = np.zeros(dim)
        self.center = np.array(center, dtype=float).ravel()
        self.radius = float(radius)
        self.dim = self.center.size

    def resolvent(self, x, rho):
        d = x - self.center
        nrm = np.linalg.norm(d)
        if nrm <= self.radius:
            return np.array(x, dtype=float)
        return self.center + d * (self.radius / nrm)

    def contains(self, z, a, tol=1e-8):
        d = np.asarray(z, float) - self.center
        nrm = np.linalg.norm(d)
        a = np.asarray(a, float)
        if nrm > self.radius + tol:
            return False
        if nrm < self.radius - tol:
            return bool(np.linalg.norm(a) <= tol)
        # on the sphere: a must be a nonnegative multiple of the outward normal
        t = float(a @ d) / nrm**2
        return bool(t >= -tol and np.linalg.norm(a - t * d) <= tol * (1 + np.linalg.norm(a)))


class QuadraticGradient(MonotoneOperator):
    """Gradient of ``1/2 x^T Q x + q^T x`` with ``Q`` symmetric PSD; resolvent is its prox."""

    def __init__(self, Q, q=None):
        Q = _as_matrix(Q, "Q")
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=1e-12):
            raise InvalidInputError("Q must be square and symmetric")
        if np.linalg.eigvalsh(Q)[0] < -1e-12:
            raise InvalidInputError("Q must be positive semidefinite")
        self.Q = Q
        self.dim = Q.shape[0]
        self.q = np.zeros(self.dim) if q is None else np.array(q, dtype=float).ravel()

    def resolvent(self, x, rho):
        return np.linalg.solve(np.eye(self.dim) + rho * self.Q, x - rho * self.q)

    def contains(self, z, a, tol=1e-8):
        return bool(np.linalg.norm(self.Q @ z + self.q - a) <= tol)


class L1Subdifferential(MonotoneOperator):
    """Subdifferential of ``w ||x||_1``; resolvent is soft thresholding at ``rho w``."""

    def __init__(self, weight: float, dim: int):
        if weight < 0:
            raise InvalidInputError("l1 weight must be nonnegative")
        self.weight = float(weight)
        self.dim = int(dim)

    def resolvent(self, x, rho):
        t = rho * self.weight
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)

    def contains(self, z, a, tol=1e-8):
        z, a = np.asarray(z, float), np.asarray(a, float)
        nz = np.abs(z) > tol
        ok_nz = np.abs(a[nz] - self.weight * np.sign(z[nz])) <= tol
        ok_z = np.abs(a[~nz]) <= self.weight + tol
        return bool(np.all(ok_nz) and np.all(ok_z))


@dataclass(frozen=True)
class Resolvent:
    """The resolvent ``J_{rho A}`` of a catalog operator at a fixed ``rho > 0``."""

    operator: MonotoneOperator
    rho: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidInputError("resolvent parameter rho must be positive")

    @property
    def dim(self) -> int:
        return self.operator.dim

    def apply(self, x) -> np.ndarray:
        return self.operator.resolvent(x, self.rho)


def resolvent_apply(r: Resolvent, x) -> np.ndarray:
    x = as_vector(x, r.dim)
    return r.apply(x)


# ---------------------------------------------------------------------------
# Evaluation blocks
# ---------------------------------------------------------------------------


class Block:
    """Evaluation rule ``(scenario, x) -> T_scenario x``.

    ``size`` is the number of scenarios the block distinguishes, or ``None``
    when it ignores the scenario index.
    """

    dim: int
    size: int | None = None

    def evaluate(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Identity(Block):
    def __init__(self, dim: int):
        self.dim = int(dim)

    def evaluate(self, i, x):
        return x


class GradientStep(Block):
    """``x -> x - gamma * grad f_i(x)``."""

    def __init__(self, gamma: float, family: GradientFamily):
        if not gamma > 0:
            raise InvalidInputError("gradient step size must be positive")
        self.gamma = float(gamma)
        self.family = family
        self.dim = family.dim
        self.size = family.size

    def evaluate(self, i, x):
        return x - self.gamma * self.family.gradient(i, x)


class AffineMap(Block):
    """``x -> M_i x + c_i``; a single ``(M, c)`` pair is shared by all scenarios."""

    def __init__(self, matrices, offsets):
        matrices = np.array(matrices, dtype=float)
        offsets = np.array(offsets, dtype=float)
        if matrices.ndim == 2:
            matrices, offsets = matrices[None], offsets[None]
            self.size = None
        else:
            self.size = matrices.shape[0]
        if matrices.shape[1] != matrices.shape[2] or offsets.shape != matrices.shape[:2]:
            raise InvalidInputError("affine maps must be square with matching offsets")
        self.matrices, self.offsets = matrices, offsets
        self.dim = matrices.shape[1]

    def evaluate(self, i, x):
        j = 0 if self.size is None else i
        return self.matrices[j] @ x + self.offsets[j]


class Translation(Block):
    """``x -> x + b_i``."""

    def __init__(self, shifts):
        shifts = np.array(shifts, dtype=float)
        if shifts.ndim == 1:
            shifts = shifts[:, None]
        self.shifts = shifts
        self.size, self.dim = shifts.shape

    def evaluate(self, i, x):
        return x + self.shifts[i]


class ResolventStep(Block):
    """Deterministic ``x -> J_{rho A} x``."""

    def __init__(self, resolvent: Resolvent):
        self.resolvent = resolvent
        self.dim = resolvent.dim

    def evaluate(self, i, x):
        return self.resolvent.apply(x)


def _common_size(blocks):
    sizes = {b.size for b in blocks if b.size is not None}
    if len(sizes) > 1:
        raise InvalidInputError(f"blocks disagree on the number of scenarios: {sorted(sizes)}")
    dims = {b.dim for b in blocks}
    if len(dims) != 1:
        raise InvalidInputError(f"blocks disagree on dimension: {sorted(dims)}")
    return (sizes.pop() if sizes else None), dims.pop()


class ConvexCombination(Block):
    """``x -> sum_j w_j B_j(i, x)`` with nonnegative weights summing to one."""

    def __init__(self, weights, blocks: Sequence[Block]):
        w = np.array(weights, dtype=float)
        if w.size != len(blocks) or np.any(w < 0) or abs(w.sum() - 1) > PROB_TOL:
            raise InvalidInputError("convex combination weights must be nonnegative and sum to 1")
        self.weights, self.blocks = w, list(blocks)
        self.size, self.dim = _common_size(self.blocks)

    def evaluate(self, i, x):
        return sum(w * b.evaluate(i, x) for w, b in zip(self.weights, self.blocks))


class Composition(Block):
    """``Composition([F, G])`` evaluates ``F(G(x))`` (rightmost block first)."""

    def __init__(self, blocks: Sequence[Block]):
        if not blocks:
            raise InvalidInputError("composition needs at least one block")
        self.blocks = list(blocks)
        self.size, self.dim = _common_size(self.blocks)

    def evaluate(self, i, x):
        for b in reversed(self.blocks):
            x = b.evaluate(i, x)
        return x


class DavisYinComposite(Block):
    """``T_i = I - J_{rho A} + J_{rho B}(2 J_{rho A} - I - rho C_i J_{rho A})``."""

    def __init__(self, rho: float, A: MonotoneOperator, B: MonotoneOperator, C: GradientFamily):
        if not rho > 0:
            raise InvalidInputError("rho must be positive")
        if not A.dim == B.dim == C.dim:
            raise InvalidInputError("A, B and C must act on the same space")
        self.rho = float(rho)
        self.A, self.B, self.C = A, B, C
        self.dim, self.size = C.dim, C.size

    def split(self, i, x):
        """Return the two resolvent outputs ``(y, z)`` of one evaluation."""
        y = self.A.resolvent(x, self.rho)
        z = self.B.resolvent(2 * y - x - self.rho * self.C.gradient(i, y), self.rho)
        return y, z

    def evaluate(self, i, x):
        y, z = self.split(i, x)
        return x - y + z


# ---------------------------------------------------------------------------
# Stochastic operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StochasticOperator:
    """A family ``{T_i}`` of operators on ``R^dim`` over a finite scenario set."""

    rule: Block
    scenarios: ScenarioSet = field(default=None)

    def __post_init__(self):
        scen = self.scenarios
        if scen is None:
            scen = ScenarioSet.uniform(self.rule.size or 1)
        elif not isinstance(scen, ScenarioSet):
            scen = ScenarioSet(scen)
        if self.rule.size is not None and self.rule.size != scen.size:
            raise InvalidInputError(
                f"rule distinguishes {self.rule.size} scenarios but {scen.size} probabilities given"
            )
        object.__setattr__(self, "scenarios", scen)

    @property
    def dim(self) -> int:
        return self.rule.dim

    @property
    def probs(self) -> np.ndarray:
        return self.scenarios.probs

    def with_probs(self, probs) -> "StochasticOperator":
        return StochasticOperator(self.rule, ScenarioSet(probs))

    def images(self, x: np.ndarray) -> np.ndarray:
        """All ``T_i x`` stacked row-wise (no input validation)."""
        return np.stack([self.rule.evaluate(i, x) for i in range(self.scenarios.size)])

    def apply(self, scenario: int, x) -> np.ndarray:
        return apply(self, scenario, x)

    def expected(self, x) -> np.ndarray:
        return expected_apply(self, x)

    def residual(self, x) -> float:
        return residual(self, x)

    def variance(self, x) -> float:
        return variance_at(self, x)


def apply(op: StochasticOperator, scenario: int, x) -> np.ndarray:
    """Evaluate ``T_scenario x``."""
    if not (0 <= int(scenario) < op.scenarios.size) or int(scenario) != scenario:
        raise InvalidInputError(f"scenario {scenario} out of range 0..{op.scenarios.size - 1}")
    x = as_vector(x, op.dim)
    return np.asarray(op.rule.evaluate(int(scenario), x), dtype=float)


def expected_apply(op: StochasticOperator, x) -> np.ndarray:
    """Exact ``T x = sum_i p_i T_i x`` by enumeration of all scenarios."""
    x = as_vector(x, op.dim)
    return op.probs @ op.images(x)


def residual(op: StochasticOperator, x) -> float:
    """Fixed-point residual ``||T x - x||``."""
    x = as_vector(x, op.dim)
    return float(np.linalg.norm(op.probs @ op.images(x) - x))


def variance_at(op: StochasticOperator, x) -> float:
    """Exact oracle variance ``E ||T_xi x - T x||^2``."""
    x = as_vector(x, op.dim)
    imgs = op.images(x)
    mean = op.probs @ imgs
    return float(op.probs @ np.sum((imgs - mean) ** 2, axis=1))


def check_nonexpansive(
    op: StochasticOperator, rng_seed: int, trials: int, scale: float = 10.0
) -> InequalityReport:
    """Randomised test of ``||T_i x - T_i y|| <= ||x - y||`` for every scenario.

    Pairs are drawn at three length scales around random centres, so both
    local and global behaviour is probed. One margin per (pair, scenario).
    """
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    rng = np.random.default_rng(rng_seed)
    margins = np.empty((trials, op.scenarios.size))
    spreads = (scale, 1.0, 1e-3)
    for t in range(trials):
        x = rng.normal(scale=scale, size=op.dim)
        y = x + rng.normal(scale=spreads[t % 3], size=op.dim)
        d = np.linalg.norm(x - y)
        for i in range(op.scenarios.size):
            margins[t, i] = d - np.linalg.norm(op.rule.evaluate(i, x) - op.rule.evaluate(i, y))
    return InequalityReport("nonexpansive", margins, NONEXPANSIVE_TOL)

"""scikit-learn compatible regressors driven by stochastic KM iterations.

Each training row is one scenario, drawn uniformly, so the fitted model is
the SKM solution of the empirical least-squares problem.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

try:
    from sklearn.utils.validation import validate_data
except ImportError:  # scikit-learn < 1.6
    def validate_data(est, X, y="no_validation", reset=True, **kw):
        return est._validate_data(X, y, reset=reset, **kw)

from .exceptions import InvalidInputError
from .operators import AffineNormalCone, BoxNormalCone, QuadraticFamily, ZeroOperator
from .problems import SgdProblem, StosProblem, build_sgd_operator, build_stos_operator
from .skm import ConstantHorizon, PowerDecay, run_skm


def _schedule(est, K):
    if est.schedule == "power":
        return PowerDecay(est.lam0, est.a)
    if est.schedule == "const":
        return ConstantHorizon(est.lam0, K)
    raise InvalidInputError(f"schedule must be 'power' or 'const', got {est.schedule!r}")


def _seed(random_state):
    if random_state is None:
        return int(np.random.default_rng().integers(2**63))
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**63))
    return int(random_state)


def _row_family(X, y):
    return QuadraticFamily([row[None, :] for row in X], [[v] for v in y])


class SKMRegressor(RegressorMixin, BaseEstimator):
    """Least squares by SGD written as a stochastic KM iteration.

    Parameters
    ----------
    n_iter : int
        Number of SKM steps (one sampled row per step).
    schedule : {"power", "const"}
        ``lam0 * (k+1)**-a`` or the horizon-dependent ``lam0 / sqrt(n_iter)``.
    lam0, a : float
        Schedule parameters.
    gamma : float or None
        Gradient step inside each operator; defaults to ``1/L``.
    fit_intercept : bool
        Append a constant column before fitting.
    random_state : int, Generator or None
        Seed of the scenario stream.
    """

    def __init__(
        self,
        n_iter=10_000,
        schedule="power",
        lam0=0.5,
        a=0.75,
        gamma=None,
        fit_intercept=True,
        random_state=0,
    ):
        self.n_iter = n_iter
        self.schedule = schedule
        self.lam0 = lam0
        self.a = a
        self.gamma = gamma
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _design(self, X):
        return np.hstack([X, np.ones((X.shape[0], 1))]) if self.fit_intercept else X

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=float, y_numeric=True)
        D = self._design(X)
        fam = _row_family(D, y)
        gamma = 1.0 / fam.smoothness if self.gamma is None else self.gamma
        op = build_sgd_operator(SgdProblem(fam, gamma))
        traj = run_skm(op, _schedule(self, self.n_iter), np.zeros(D.shape[1]), self.n_iter, _seed(self.random_state))
        w = traj.last
        self.coef_ = w[: X.shape[1]].copy()
        self.intercept_ = float(w[-1]) if self.fit_intercept else 0.0
        self.operator_ = op
        self.n_iter_ = self.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=float, reset=False)
        return X @ self.coef_ + self.intercept_


class STOSRegressor(RegressorMixin, BaseEstimator):
    """Box- and equality-constrained least squares by stochastic three-operator splitting.

    The box ``[lower, upper]`` enters through its normal cone (projection),
    the equalities ``A_eq w = b_eq`` through an affine normal cone and the
    data term through per-row gradients. The reported coefficients are the
    box projection of the last iterate.
    """

    def __init__(
        self,
        lower=None,
        upper=None,
        A_eq=None,
        b_eq=None,
        rho=None,
        n_iter=10_000,
        lam0=0.5,
        a=0.75,
        schedule="power",
        random_state=0,
    ):
        self.lower = lower
        self.upper = upper
        self.A_eq = A_eq
        self.b_eq = b_eq
        self.rho = rho
        self.n_iter = n_iter
        self.lam0 = lam0
        self.a = a
        self.schedule = schedule
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=float, y_numeric=True)
        n = X.shape[1]
        lo = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,))
        hi = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,))
        A = BoxNormalCone(lo, hi)
        if self.A_eq is None:
            B = ZeroOperator(n)
        else:
            B = AffineNormalCone(self.A_eq, self.b_eq)
        C = _row_family(X, y)
        rho = C.cocoercivity if self.rho is None else self.rho
        prob = StosProblem(A, B, C, rho)
        op = build_stos_operator(prob)
        x0 = B.resolvent(A.resolvent(np.zeros(n), rho), rho)
        traj = run_skm(op, _schedule(self, self.n_iter), x0, self.n_iter, _seed(self.random_state))
        self.coef_ = A.resolvent(traj.last, rho)
        self.fixed_point_ = traj.last
        self.problem_ = prob
        self.operator_ = op
        self.n_iter_ = self.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=float, reset=False)
        return X @ self.coef_

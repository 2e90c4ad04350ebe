"""Named verification suites run against the built-in catalog."""
from __future__ import annotations

import numpy as np

from . import catalog
from .operators import check_nonexpansive, residual
from .problems import (
    lift_zero_to_fixed_point,
    stos_step,
    stos_variance_bound,
    zero_certificate,
)
from .reports import InequalityReport
from .rng import stream
from .skm import Constant, ConstantHorizon, PowerDecay, run_skm, theoretical_residual_bound
from .verify import (
    check_decrease_inequality,
    check_residual_bound,
    check_variance_constancy,
    check_variance_transfer,
    enumerate_expectations,
    telescoped_gap,
)

SUITES = ("lemmas", "bound", "stos", "all")
LAMBDAS = (0.1, 0.5, 0.9)


def random_states(dim, count, seed, scale=3.0):
    return stream(seed, "states").normal(scale=scale, size=(count, dim))


def _renamed(report: InequalityReport, name: str) -> InequalityReport:
    return InequalityReport(name, report.margins, report.tolerance)


def lemma_checks(seed: int = 0, trials: int = 1000):
    sgd, tr, line = catalog.sgd1d(), catalog.translation(), catalog.fixed_line2d()
    lsq, stos = catalog.random_least_squares(), catalog.constrained_least_squares()
    out = []
    for inst in (catalog.identity(), catalog.negation(), tr, sgd, line, lsq, stos):
        out.append(_renamed(check_nonexpansive(inst.op, seed, trials), f"nonexpansive[{inst.name}]"))
    bad = check_nonexpansive(catalog.sgd_invalid().op, seed, trials)
    # the checker must flag gamma > 2/L; a positive margin means it did
    out.append(InequalityReport("nonexpansive_detects_violation[sgd-invalid]", [-bad.min_margin], 0.0))
    for inst in (sgd, tr):
        states = random_states(inst.op.dim, trials, seed)
        for lam in LAMBDAS:
            rep = check_decrease_inequality(inst.op, inst.p, states, lam, inst.sigma_star_sq)
            out.append(_renamed(rep, f"decrease_inequality[{inst.name},lam={lam}]"))
    for inst in (sgd, tr, lsq, stos):
        pts = inst.p + random_states(inst.op.dim, trials, seed)
        rep = check_variance_transfer(inst.op, inst.p, inst.sigma_star_sq, pts)
        out.append(_renamed(rep, f"variance_transfer[{inst.name}]"))
    rep = check_variance_constancy(line.op, catalog.fixed_line_points(line, 10))
    out.append(_renamed(rep, f"variance_constancy[{line.name}]"))
    return out


def bound_configs():
    """Enumerable (instance, schedule, K) triples used by the bound suite."""
    return [
        (catalog.negation(), Constant(0.5), 2),
        (catalog.translation(), Constant(0.5), 3),
        (catalog.sgd1d(), ConstantHorizon(0.5, 8), 8),
        (catalog.sgd1d(), PowerDecay(0.5, 0.75), 10),
        (catalog.random_least_squares(n=2, m=3, seed=1), ConstantHorizon(0.5, 6), 6),
        (catalog.constrained_least_squares(), ConstantHorizon(0.5, 5), 5),
    ]


def bound_checks():
    out = []
    for inst, sch, K in bound_configs():
        enum = enumerate_expectations(inst.op, sch, inst.x0, K, inst.p, sigma_star_sq=inst.sigma_star_sq)
        bound = theoretical_residual_bound(sch, K, inst.dist0_sq, inst.sigma_star_sq)
        out.append(_renamed(check_residual_bound(enum, bound, K), f"residual_bound[{inst.name},K={K}]"))
        lhs, rhs = telescoped_gap(enum, inst.dist0_sq, inst.sigma_star_sq)
        out.append(InequalityReport(f"telescope_identity[{inst.name},K={K}]", [-abs(lhs - rhs)], 1e-9))
        out.append(
            InequalityReport(
                f"enumeration_probability[{inst.name},K={K}]", [-abs(enum.total_probability - 1)], 1e-10
            )
        )
    return out


def kkt_solution(prob):
    """Equality-constrained least squares by a direct KKT solve (box assumed inactive)."""
    P = prob.probs.probs
    H, g = prob.C.hessian(P), prob.C.linear_term(P)
    M, c = prob.B.M, prob.B.c
    n, r = H.shape[0], M.shape[0]
    kkt = np.block([[H, M.T], [M, np.zeros((r, r))]])
    sol = np.linalg.solve(kkt, np.concatenate([g, c]))
    return sol[:n], sol[n:]


def stos_checks(seed: int = 0, trials: int = 1000):
    inst = catalog.constrained_least_squares()
    prob, op = inst.problem, inst.op
    out = [_renamed(check_nonexpansive(op, seed, trials), "nonexpansive[stos-eqls]")]

    x_kkt, _ = kkt_solution(prob)
    out.append(InequalityReport("reference_matches_kkt", [-np.linalg.norm(inst.x_star - x_kkt)], 1e-8))

    # box inactive at the solution, so a = 0 certifies membership in A(x*)
    lifted = lift_zero_to_fixed_point(prob, x_kkt, np.zeros(op.dim))
    out.append(InequalityReport("lift_residual", [1e-8 - residual(op, lifted)], 0.0))

    _, _, _, ok = zero_certificate(prob, inst.p)
    out.append(InequalityReport("fixed_point_decodes_to_zero", [0.0 if ok else -1.0], 0.0))

    sch, K = PowerDecay(0.5, 0.75), 200
    traj = run_skm(op, sch, inst.x0, K, seed)
    x, worst = inst.x0, 0.0
    for k in range(K):
        _, _, x = stos_step(prob, x, int(traj.scenarios[k]), sch.value(k))
        worst = max(worst, float(np.max(np.abs(x - traj.iterates[k + 1]))))
    out.append(InequalityReport("stos_step_matches_skm", [-worst], 1e-12))

    out.append(
        InequalityReport(
            "stos_variance_bound", [stos_variance_bound(prob, inst.x_star) - inst.sigma_star_sq], 1e-10
        )
    )
    states = inst.p + random_states(op.dim, trials, seed)
    for lam in LAMBDAS:
        rep = check_decrease_inequality(op, inst.p, states, lam, inst.sigma_star_sq)
        out.append(_renamed(rep, f"decrease_inequality[stos-eqls,lam={lam}]"))
    return out


def run_suite(name: str, seed: int = 0):
    if name == "lemmas":
        return lemma_checks(seed)
    if name == "bound":
        return bound_checks()
    if name == "stos":
        return stos_checks(seed)
    if name == "all":
        return lemma_checks(seed) + bound_checks() + stos_checks(seed)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skm_lab import catalog
from skm_lab.exceptions import BudgetExceeded, InvalidInputError
from skm_lab.operators import expected_apply
from skm_lab.reports import InequalityReport
from skm_lab.skm import Constant, ConstantHorizon, PowerDecay, random_index_distribution, theoretical_residual_bound
from skm_lab.suites import SUITES, run_suite
from skm_lab.verify import (
    PowerSequence,
    check_bounded_iterates,
    check_decrease_inequality,
    check_residual_bound,
    check_variance_constancy,
    check_variance_transfer,
    enumerate_expectations,
    fit_rate,
    monte_carlo_sq_dist,
    telescoped_gap,
    check_weighted_min_vanishing,
)


def path_oracle(op, lams, x0, p):
    """Walks every prefix path separately; independent of the level-wise enumerator."""
    K = len(lams)
    m = op.scenarios.size
    sq_dist = np.zeros(K + 1)
    sq_res = np.zeros(K)
    for k in range(K + 1):
        for prefix in itertools.product(range(m), repeat=k):
            w, x = 1.0, np.array(x0, dtype=float)
            for j, i in enumerate(prefix):
                x = (1 - lams[j]) * x + lams[j] * op.rule.evaluate(i, x)
                w *= op.probs[i]
            sq_dist[k] += w * np.sum((x - p) ** 2)
            if k < K:
                sq_res[k] += w * np.sum((expected_apply(op, x) - x) ** 2)
    return sq_dist, sq_res


class TestReport:
    def test_empty_is_vacuous(self):
        rep = InequalityReport("x", [], 0.0)
        assert rep.passed and rep.cases == 0
        assert rep.to_record()["min_margin"] is None

    def test_tolerance_edge(self):
        assert InequalityReport("x", [-1e-9], 1e-9).passed
        assert not InequalityReport("x", [-1.1e-9], 1e-9).passed


class TestEnumeration:
    def test_negation_exact(self, negation):
        enum = enumerate_expectations(negation.op, Constant(0.5), negation.x0, 2, negation.p)
        # x0 = 1 has residual^2 = 4, x1 = 0 has residual 0; P(N=0) = 3/4
        assert enum.output_residual_sq == pytest.approx(3.0, abs=1e-15)
        assert theoretical_residual_bound(Constant(0.5), 2, negation.dist0_sq, 0.0) == pytest.approx(18.0)

    def test_translation_moments(self, translation):
        enum = enumerate_expectations(translation.op, Constant(0.5), translation.x0, 3, translation.p)
        np.testing.assert_allclose(enum.mean_sq_dist, [0.0, 0.25, 0.5, 0.75], atol=1e-15)

    @pytest.mark.parametrize(
        "name,sch,K",
        [
            ("sgd1d", ConstantHorizon(0.5, 6), 6),
            ("sgd1d", PowerDecay(0.5, 0.75), 7),
            ("lsq", ConstantHorizon(0.5, 3), 3),
            ("stos-eqls", PowerDecay(0.9, 0.6), 4),
        ],
    )
    def test_matches_path_oracle(self, name, sch, K):
        inst = catalog.build(name)
        enum = enumerate_expectations(inst.op, sch, inst.x0, K, inst.p)
        d, r = path_oracle(inst.op, sch.values(K), inst.x0, inst.p)
        np.testing.assert_allclose(enum.mean_sq_dist, d, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(enum.mean_sq_residual, r, rtol=1e-12, atol=1e-14)
        assert enum.output_residual_sq == pytest.approx(random_index_distribution(sch, K).probs @ r, rel=1e-12)

    def test_sgd1d_rational(self):
        # x_{k+1} = (1 - lam/2) x_k + (lam/2) a, a = +-1; E x^2 obeys c^2 E x^2 + lam^2/4
        lam = Fraction(1, 4)
        c = 1 - lam / 2
        m2 = [Fraction(1)]
        for _ in range(4):
            m2.append(c * c * m2[-1] + lam * lam / 4)
        inst = catalog.sgd1d()
        enum = enumerate_expectations(inst.op, Constant(0.25), inst.x0, 4, inst.p)
        np.testing.assert_allclose(enum.mean_sq_dist, [float(v) for v in m2], rtol=1e-14)

    def test_budget(self, sgd1d):
        with pytest.raises(BudgetExceeded) as info:
            enumerate_expectations(sgd1d.op, Constant(0.5), sgd1d.x0, 20, sgd1d.p, budget=10)
        assert info.value.required == 2**20

    def test_probability_total(self, sgd1d):
        enum = enumerate_expectations(sgd1d.op, Constant(0.5), sgd1d.x0, 8, sgd1d.p)
        assert enum.total_probability == pytest.approx(1.0, abs=1e-12)
        assert enum.path_count == 256

    def test_requires_fixed_point(self, sgd1d):
        with pytest.raises(InvalidInputError):
            enumerate_expectations(sgd1d.op, Constant(0.5), sgd1d.x0, 3, [1.0], sigma_star_sq=0.25)

    @pytest.mark.parametrize("name,sch,K", [("sgd1d", ConstantHorizon(0.5, 8), 8), ("translation", Constant(0.5), 5), ("stos-eqls", ConstantHorizon(0.5, 4), 4)])
    def test_telescope_identity(self, name, sch, K):
        inst = catalog.build(name)
        enum = enumerate_expectations(inst.op, sch, inst.x0, K, inst.p, sigma_star_sq=inst.sigma_star_sq)
        lhs, rhs = telescoped_gap(enum, inst.dist0_sq, inst.sigma_star_sq)
        assert lhs == pytest.approx(rhs, abs=1e-12)
        assert np.all(enum.step_margins >= -1e-12)

    def test_telescope_needs_sigma(self, sgd1d):
        enum = enumerate_expectations(sgd1d.op, Constant(0.5), sgd1d.x0, 2, sgd1d.p)
        with pytest.raises(InvalidInputError):
            telescoped_gap(enum, 1.0, 0.25)

    def test_residual_bound_horizon_mismatch(self, sgd1d):
        enum = enumerate_expectations(sgd1d.op, Constant(0.5), sgd1d.x0, 2, sgd1d.p)
        with pytest.raises(InvalidInputError):
            check_residual_bound(enum, 1.0, K=3)

    def test_weighted_sum_bound_with_lambda_K(self, sgd1d):
        """sum_k Lambda_{k+1} lam_k(1-lam_k) E r_k^2 <= d0 + 2 sigma^2 sum lam_k^2."""
        sch, K = PowerDecay(0.5, 0.75), 10
        enum = enumerate_expectations(sgd1d.op, sch, sgd1d.x0, K, sgd1d.p)
        lam = enum.lambdas
        Lam = np.cumprod(1 / (1 + 8 * lam**2))
        lhs = float((Lam * lam * (1 - lam)) @ enum.mean_sq_residual)
        assert lhs <= sgd1d.dist0_sq + 2 * sgd1d.sigma_star_sq * float(np.sum(lam**2))


class TestInequalities:
    @pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
    def test_decrease_holds(self, stos_instance, lam, rng):
        states = stos_instance.p + rng.normal(scale=3, size=(300, 3))
        rep = check_decrease_inequality(stos_instance.op, stos_instance.p, states, lam, stos_instance.sigma_star_sq)
        assert rep.passed and rep.cases == 300

    def test_decrease_tight_for_translation(self, translation):
        # E|x+ - p|^2 = d + lam^2 exactly, so the margin is 8 lam^2 d + lam^2
        rep = check_decrease_inequality(translation.op, translation.p, [[0.0], [2.0]], 0.5, 1.0)
        np.testing.assert_allclose(rep.margins, [0.25, 8.25], atol=1e-14)

    def test_decrease_detects_understated_variance(self, translation):
        rep = check_decrease_inequality(translation.op, translation.p, [[0.0]], 0.5, 0.0)
        assert not rep.passed

    def test_decrease_rejects_bad_lambda(self, sgd1d):
        with pytest.raises(InvalidInputError):
            check_decrease_inequality(sgd1d.op, sgd1d.p, [[0.0]], 1.0, 0.25)

    def test_transfer_detects_understated_variance(self, translation):
        rep = check_variance_transfer(translation.op, translation.p, 0.0, [[0.0]])
        assert not rep.passed

    def test_constancy_pairwise(self, fixed_line):
        pts = catalog.fixed_line_points(fixed_line, 10)
        rep = check_variance_constancy(fixed_line.op, pts)
        assert rep.cases == 45 and rep.passed

    def test_constancy_requires_fixed_points(self, fixed_line):
        with pytest.raises(InvalidInputError):
            check_variance_constancy(fixed_line.op, [[0.0, 0.0], [1.0, 5.0]])

    def test_bounded_iterates(self, sgd1d):
        seeds = range(100)
        rep = check_bounded_iterates(sgd1d.op, PowerDecay(0.5, 0.75), [5.0], sgd1d.p, sgd1d.sigma_star_sq, 2000, seeds, every=50)
        assert rep.passed

    def test_bounded_iterates_stos(self, stos_instance):
        rep = check_bounded_iterates(
            stos_instance.op, PowerDecay(0.5, 0.75), stos_instance.x0, stos_instance.p, stos_instance.sigma_star_sq, 1000, range(100), every=100
        )
        assert rep.passed


class TestMonteCarlo:
    def test_matches_enumeration_translation(self, translation):
        mean, se = monte_carlo_sq_dist(translation.op, Constant(0.5), translation.x0, 3, translation.p, range(2000))
        assert abs(mean - 0.75) <= 4 * se


class TestRates:
    def test_exact_power_law(self):
        Ks = np.array([10, 100, 1000])
        fit = fit_rate(Ks, 3.0 * Ks**-0.5)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_needs_three_points(self):
        with pytest.raises(InvalidInputError):
            fit_rate([1, 2], [1.0, 0.5])

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            fit_rate([1, 2, 3], [1.0, 0.0, 0.5])


class TestWeightedMin:
    def test_passes_for_admissible_pair(self):
        rep = check_weighted_min_vanishing(PowerSequence(1.0, 0.75), PowerSequence(1.0, 0.5), 100_000)
        assert rep.passed

    def test_zero_sequence(self):
        rep = check_weighted_min_vanishing(PowerSequence(1.0, 1.0), PowerSequence(0.0), 1000)
        assert rep.passed

    def test_rejects_summable_weights(self):
        with pytest.raises(InvalidInputError):
            check_weighted_min_vanishing(PowerSequence(1.0, 1.5), PowerSequence(1.0, 0.5), 1000)

    def test_rejects_divergent_product(self):
        # the hypotheses fail: sum k^-1/2 k^-1/2 diverges
        with pytest.raises(InvalidInputError):
            check_weighted_min_vanishing(PowerSequence(1.0, 0.5), PowerSequence(1.0, 0.5), 1000)

    def test_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            PowerSequence(-1.0, 1.0)

    @settings(max_examples=20, deadline=None)
    @given(e=st.floats(0.3, 0.9), extra=st.floats(0.3, 1.0))
    def test_property(self, e, extra):
        x_exp = 1.0 - e + extra
        rep = check_weighted_min_vanishing(PowerSequence(1.0, e), PowerSequence(2.0, x_exp), 100_000)
        assert rep.passed


    def test_slow_decay_not_visible_at_finite_horizon(self):
        # log K * K^-1/8 peaks near K = e^8 and has barely dropped by 1e5
        rep = check_weighted_min_vanishing(PowerSequence(1.0, 1.0), PowerSequence(1.0, 0.125), 100_000)
        assert not rep.passed


class TestSuites:
    @pytest.mark.parametrize("name", SUITES)
    def test_all_pass(self, name):
        reps = run_suite(name, seed=0)
        failed = [r.name for r in reps if not r.passed]
        assert not failed

    def test_unknown(self):
        with pytest.raises(ValueError):
            run_suite("nope")

import math

import numpy as np
import pytest

from ovqueue.errors import ModelSpecError, PoleError
from ovqueue.heavy_traffic import (
    HtApprox,
    aligned_exp_tail,
    alpha_derivatives_at_one,
    exp_tail_curve,
    ht_mean_endogenous,
    ht_mean_modulated,
    ht_mean_resampled,
    ht_rbm_params_general,
    ht_transient_transform_endogenous,
    rbm_transient_cdf,
)
from ovqueue.models import ClockLaw, Generator, MMQueueSpec, RateLawFinite, build_resampling_generator


def random_resampling_law(rng, d_max=4):
    d = int(rng.integers(1, d_max + 1))
    pis = rng.random(d) + 0.1
    pis /= pis.sum()
    lam = rng.random(d) * 2.0 + 0.05
    mu = rng.random(d) + 0.5
    q = rng.random() * 1.5 + 0.3
    return RateLawFinite(lam, mu, pis), q


class TestConsistencyTriangle:
    def test_twenty_random_laws(self):
        rng = np.random.default_rng(100)
        for _ in range(20):
            law, q = random_resampling_law(rng)
            m_closed = ht_mean_resampled(law, q).mean
            m_numeric = ht_mean_modulated(build_resampling_generator(law, q)).mean
            clock = ClockLaw("exponential", {"rate": q})
            m_rbm = ht_rbm_params_general(law, clock).stationary_mean
            assert m_numeric == pytest.approx(m_closed, rel=1e-6)
            assert m_rbm == pytest.approx(m_closed, rel=1e-12)

    def test_scaling_invariance(self):
        law = RateLawFinite([1.2, 0.4], [1.5, 1.0], [0.5, 0.5])
        mm = build_resampling_generator(law, 0.7)
        base = ht_mean_modulated(mm).mean
        for rho0 in (0.2, 0.5, 0.9, 0.99):
            assert ht_mean_modulated(mm.scaled_to_rho(rho0)).mean == pytest.approx(
                base, abs=1e-8 * base)


class TestModulatedMean:
    def test_scalar_is_one(self):
        law = RateLawFinite([0.5], [1.0], [1.0])
        assert ht_mean_modulated(build_resampling_generator(law, 1.0)).mean == (
            pytest.approx(1.0, rel=1e-10))

    def test_cyclic_three_state(self):
        gen = Generator(np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0],
                                  [1.0, 0.0, -1.0]]))
        mm = MMQueueSpec(gen, np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 2.0]))
        approx = ht_mean_modulated(mm)
        # frozen from the determinant-polynomial route, validated against
        # central finite differences at construction time
        assert approx.mean == pytest.approx(7.0 / 6.0, rel=1e-8)

    def test_alpha_prime_identity(self):
        # alpha'(1) = -tau pi.mu (1 - rho) away from criticality
        rng = np.random.default_rng(101)
        for _ in range(10):
            law, q = random_resampling_law(rng)
            mm = build_resampling_generator(law, q)
            _, a1, _ = alpha_derivatives_at_one(mm)
            gen = mm.generator
            expected = -gen.tau * float(gen.pi @ mm.mus) * (1.0 - mm.rho)
            assert a1 == pytest.approx(expected, rel=1e-8, abs=1e-10)

    def test_finite_difference_validation_agrees(self):
        from ovqueue.heavy_traffic import _alpha_pp_finite_diff
        rng = np.random.default_rng(102)
        for _ in range(5):
            law, q = random_resampling_law(rng)
            mm = build_resampling_generator(law, q)
            crit = mm.scaled_arrivals(float(mm.generator.pi @ mm.mus)
                                      / float(mm.generator.pi @ mm.lambdas))
            _, _, a2 = alpha_derivatives_at_one(crit)
            assert _alpha_pp_finite_diff(crit) == pytest.approx(a2, rel=1e-6)


class TestResampledMean:
    def test_closed_form_at_criticality(self):
        # lam in {lam, 0} equiprobable, mu = 1: critical lam = 2, so
        # sigma^2 = 4/(2q) + 2 and mean = 1/q + 1
        for q in (0.5, 1.0, 2.0):
            law = RateLawFinite([1.7, 0.0], [1.0, 1.0], [0.5, 0.5])
            approx = ht_mean_resampled(law, q)
            assert approx.variance == pytest.approx(2.0 / q + 2.0, rel=1e-12)
            assert approx.mean == pytest.approx(1.0 / q + 1.0, rel=1e-12)

    def test_formula_at_given_load(self):
        law = RateLawFinite([1.8, 0.0], [1.0, 1.0], [0.5, 0.5])
        approx = ht_mean_resampled(law, 1.0, rescale_to_critical=False)
        assert approx.variance == pytest.approx(1.8**2 / 2.0 + 2.0, rel=1e-12)
        assert approx.mean == pytest.approx(1.8**2 / 4.0 + 1.0, rel=1e-12)

    def test_critical_two_point_value(self):
        law = RateLawFinite([2.0, 0.0], [1.0, 1.0], [0.5, 0.5])
        assert ht_mean_resampled(law, 1.0, rescale_to_critical=False).mean == (
            pytest.approx(2.0))

    def test_deterministic_rates_give_one(self):
        law = RateLawFinite([0.7], [1.0], [1.0])
        assert ht_mean_resampled(law, 0.3).mean == pytest.approx(1.0)

    def test_rejects_bad_inputs(self):
        law = RateLawFinite([0.7], [1.0], [1.0])
        with pytest.raises(ModelSpecError):
            ht_mean_resampled(law, 0.0)


class TestRbmParams:
    def test_exponential_clock_matches_closed_form(self):
        law = RateLawFinite([1.3, 0.2], [1.1, 0.9], [0.4, 0.6])
        q = 0.8
        rbm = ht_rbm_params_general(law, ClockLaw("exponential", {"rate": q}))
        exp_form = ht_mean_resampled(law, q)
        assert rbm.variance == pytest.approx(exp_form.variance, rel=1e-12)
        assert rbm.drift == pytest.approx(-law.mean_service)

    def test_deterministic_clock(self):
        law = RateLawFinite([1.3, 0.2], [1.1, 0.9], [0.4, 0.6]).scaled_to_critical()
        d = 2.5
        rbm = ht_rbm_params_general(law, ClockLaw("deterministic", {"value": d}),
                                    rescale_to_critical=False)
        expected = (law.var_arrival - 2 * law.cov + law.var_service) * d \
            + 2 * law.mean_service
        assert rbm.variance == pytest.approx(expected, rel=1e-12)

    def test_zero_variance_law(self):
        law = RateLawFinite([0.9], [1.0], [1.0])
        rbm = ht_rbm_params_general(law, ClockLaw("gamma", {"shape": 2.0, "rate": 1.0}))
        assert rbm.variance == pytest.approx(2.0 * law.mean_service, rel=1e-12)

    def test_stationary_mean_exposed(self):
        approx = HtApprox("rbm", drift=-2.0, variance=6.0)
        assert approx.stationary_mean == pytest.approx(1.5)


class TestEndogenousMean:
    def test_deterministic_arrival_rate(self):
        # mean (1/2) E[S^2] / (E S)^2
        es, es2 = 0.5, 0.7
        approx = ht_mean_endogenous(0.9, 0.81, es, es2)
        assert approx.mean == pytest.approx(0.5 * es2 / es**2, rel=1e-12)

    def test_mm1_case_is_one(self):
        assert ht_mean_endogenous(1.0, 1.0, 1.0, 2.0).mean == pytest.approx(1.0)

    def test_two_point_rate_deterministic_service(self):
        el = 0.8
        approx = ht_mean_endogenous(el, 2 * el * el, 1.0, 1.0)
        assert approx.mean == pytest.approx(1.0, rel=1e-12)


class TestTransientTransform:
    def test_normalization_at_zero(self):
        assert ht_transient_transform_endogenous(1.0, 0.0, 2.0) == pytest.approx(1.0)

    def test_instant_horizon(self):
        assert ht_transient_transform_endogenous(1e9, 0.7, 2.0) == pytest.approx(
            1.0, abs=1e-4)

    def test_completely_monotone_grid(self):
        s_grid = np.linspace(0.0, 3.0, 40)
        vals = np.array([ht_transient_transform_endogenous(1.0, s, 2.0)
                         for s in s_grid])
        assert np.all(vals >= 0.0)
        assert np.all(np.diff(vals) <= 1e-12)
        assert np.all(np.diff(vals, 2) >= -1e-10)

    def test_pole_reported(self):
        # r - s - nu''/2 s^2 = 0 at s = s0(r)
        nu = 2.0
        r = 1.0
        s_pole = (-1.0 + math.sqrt(1.0 + 2.0 * nu * r)) / nu
        with pytest.raises(PoleError):
            ht_transient_transform_endogenous(r, s_pole, nu)


class TestTailCurves:
    def test_boundary_value(self):
        curve = exp_tail_curve(1.81, 0.9, 5)
        assert curve[0] == 1.0

    def test_decay_rate(self):
        curve = exp_tail_curve(1.81, 0.9, 10)
        rate = -np.log(curve[1] / curve[0])
        assert rate == pytest.approx(0.1 / 1.81, rel=1e-12)

    def test_log_linear(self):
        curve = exp_tail_curve(2.0, 0.95, 50)
        logs = np.log(curve)
        assert np.diff(logs) == pytest.approx(np.full(50, logs[1] - logs[0]), abs=1e-12)

    def test_alignment_shift(self):
        full = exp_tail_curve(1.81, 0.9, 11)
        assert aligned_exp_tail(1.81, 0.9, 10) == pytest.approx(full[1:])

    def test_rejects_degenerate_load(self):
        with pytest.raises(ModelSpecError):
            exp_tail_curve(1.0, 0.0, 5)


class TestRbmCdf:
    def test_long_horizon_is_exponential(self):
        y = np.linspace(0.1, 4.0, 12)
        got = rbm_transient_cdf(y, 1000.0, -1.0, 2.0)
        assert got == pytest.approx(1.0 - np.exp(-y), abs=1e-9)

    def test_short_horizon_is_initial_point(self):
        assert rbm_transient_cdf(np.array([4.9]), 1e-6, -1.0, 2.0, x0=5.0)[0] == (
            pytest.approx(0.0, abs=1e-9))
        assert rbm_transient_cdf(np.array([5.1]), 1e-6, -1.0, 2.0, x0=5.0)[0] == (
            pytest.approx(1.0, abs=1e-9))

    def test_transform_consistency(self):
        # integrating e^{-s y} dF against the exact transform
        from scipy import integrate
        r, s, nu = 1.0, 0.5, 2.0
        target = ht_transient_transform_endogenous(r, s, nu)

        def integrand(t):
            ys = np.linspace(0.0, 60.0, 6001)
            cdf = rbm_transient_cdf(ys, t, -1.0, nu)
            pdf_mass = np.diff(cdf)
            atom = cdf[0]
            mids = 0.5 * (ys[1:] + ys[:-1])
            return r * math.exp(-r * t) * (atom + float(np.exp(-s * mids) @ pdf_mass))

        val, _ = integrate.quad(integrand, 0.0, 40.0, limit=200)
        assert val == pytest.approx(target, abs=2e-4)

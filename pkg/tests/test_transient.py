import math

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from oracles import cardano_cubic, transient_resolvent, truncated_ctmc_stationary, tv_distance
from ovqueue.errors import ModelSpecError
from ovqueue.models import RateLawFinite, build_resampling_generator
from ovqueue.qbd import solve_r_matrix
from ovqueue.transient import (
    quadratic_roots,
    solve_two_point_stationary,
    transient_pgf_at_exp_epoch,
)


class TestQuadraticRoots:
    def test_symmetric_case(self):
        roots = quadratic_roots(1.0, 1.0, 1.0)
        assert roots.x2 == pytest.approx((3.0 - math.sqrt(5.0)) / 2.0, abs=1e-14)
        assert roots.x1 == pytest.approx((3.0 + math.sqrt(5.0)) / 2.0, abs=1e-14)

    def test_root_and_vieta_identities(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            lam = rng.random() * 3 + 1e-6
            mu = rng.random() * 3
            q = rng.random() * 2 + 1e-6
            r = quadratic_roots(lam, mu, q)
            assert r.x1 >= r.x2
            scale = max(1.0, lam + mu + q)
            assert abs(r.f_poly(r.x1)) < 1e-12 * scale * max(1.0, r.x1**2)
            assert abs(r.f_poly(r.x2)) < 1e-12 * scale
            assert r.x1 * r.x2 == pytest.approx(mu / lam, rel=1e-10)
            assert r.x1 + r.x2 == pytest.approx((lam + mu + q) / lam, rel=1e-10)
            if lam < mu:
                assert 0.0 < r.x2 < 1.0

    def test_busy_period_limit(self):
        # q -> 0+ with lam < mu: x2 is the busy-period LST at 0, tends to 1
        assert quadratic_roots(0.5, 1.0, 1e-12).x2 == pytest.approx(1.0, abs=1e-10)

    def test_vieta_product_example(self):
        r = quadratic_roots(1.0, 2.0, 1.0)
        assert r.x1 * r.x2 == pytest.approx(2.0, rel=1e-12)

    def test_degenerate_no_arrivals(self):
        r = quadratic_roots(0.0, 1.0, 1.0)
        assert math.isinf(r.x1)
        assert r.x2 == pytest.approx(0.5)
        assert r.degenerate


class TestTransientPgf:
    def test_normalization_at_one(self):
        for (i, lam, mu, q) in [(0, 0.5, 1.0, 1.0), (3, 1.5, 1.0, 0.2),
                                (7, 0.0, 2.0, 0.5)]:
            assert transient_pgf_at_exp_epoch(i, lam, mu, q, 1.0) == pytest.approx(
                1.0, abs=1e-12)

    def test_empty_pure_death(self):
        assert transient_pgf_at_exp_epoch(0, 0.0, 1.0, 1.0, 0.0) == pytest.approx(1.0)

    def test_against_resolvent_oracle(self):
        cases = [(2, 0.8, 1.0, 0.5, 0.5), (0, 0.5, 1.0, 1.0, 0.3),
                 (5, 1.2, 1.0, 2.0, 0.3), (3, 0.5, 1.0, 1.0, 0.9),
                 (1, 0.0, 1.5, 0.7, 0.6)]
        for (i, lam, mu, q, z) in cases:
            oracle = transient_resolvent(i, lam, mu, q, z)
            assert transient_pgf_at_exp_epoch(i, lam, mu, q, z) == pytest.approx(
                oracle, abs=1e-10)

    def test_against_path_simulation(self):
        # brute-force CTMC paths to an exp(q) epoch
        i, lam, mu, q, z = 2, 0.8, 1.0, 0.5, 0.5
        rng = np.random.default_rng(123)
        n_paths = 20_000
        vals = np.empty(n_paths)
        for p in range(n_paths):
            horizon = rng.exponential(1.0 / q)
            t, queue = 0.0, i
            while True:
                rate = lam + (mu if queue > 0 else 0.0)
                t += rng.exponential(1.0 / rate)
                if t >= horizon:
                    break
                if rng.random() * rate < lam:
                    queue += 1
                else:
                    queue -= 1
            vals[p] = z**queue
        se = vals.std(ddof=1) / math.sqrt(n_paths)
        expected = transient_pgf_at_exp_epoch(i, lam, mu, q, z)
        assert abs(vals.mean() - expected) < 3 * se

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            i = int(rng.integers(0, 10))
            lam, mu, q = rng.random() * 2, rng.random() * 2, rng.random() + 0.1
            z = rng.random()
            v = transient_pgf_at_exp_epoch(i, lam, mu, q, z)
            assert -1e-12 <= v <= 1.0 + 1e-12

    def test_lhopital_at_root(self):
        roots = quadratic_roots(0.8, 1.0, 0.5)
        x2 = roots.x2
        at_root = transient_pgf_at_exp_epoch(4, 0.8, 1.0, 0.5, x2)
        nearby = transient_pgf_at_exp_epoch(4, 0.8, 1.0, 0.5, x2 + 1e-7)
        assert at_root == pytest.approx(nearby, rel=1e-5)


def _reference_two_point_law(lam, q=1.0):
    return RateLawFinite([lam, 0.0], [1.0, 1.0], [0.5, 0.5]), q


class TestTwoPointStationary:
    def test_degenerate_resampling_is_geometric(self):
        law = RateLawFinite([0.5, 0.5], [1.0, 1.0], [0.5, 0.5])
        sol = solve_two_point_stationary(law, 0.7)
        for z in np.linspace(0.0, 0.99, 15):
            assert sol.pgf(z) == pytest.approx(0.5 / (1.0 - 0.5 * z), abs=1e-10)

    def test_empty_probability(self):
        law, q = _reference_two_point_law(1.8, 1.0)
        sol = solve_two_point_stationary(law, q)
        assert sol.pgf(0.0) == pytest.approx(0.1, abs=1e-10)
        assert sol.pgf(1.0) == pytest.approx(1.0, abs=1e-8)

    def test_quartic_structure(self):
        law = RateLawFinite([1.2, 0.4], [1.5, 1.0], [0.5, 0.5])
        sol = solve_two_point_stationary(law, 0.7)
        assert P.polyval(0.0, sol.quartic) == pytest.approx(1.5 * 1.0, abs=1e-12)
        scale = np.max(np.abs(sol.quartic))
        assert abs(P.polyval(1.0, sol.quartic)) < 1e-10 * scale
        assert 0.0 < sol.z_star < 1.0
        assert abs(P.polyval(sol.z_star, sol.quartic)) < 1e-10 * scale

    def test_unknowns_in_unit_interval(self):
        law, q = _reference_two_point_law(1.8, 1.0)
        sol = solve_two_point_stationary(law, q)
        assert np.all(sol.u >= 0.0) and np.all(sol.u <= 1.0)

    def test_cross_oracle_against_qbd(self):
        law = RateLawFinite([1.2, 0.4], [1.5, 1.0], [0.5, 0.5])
        q = 0.7
        sol = solve_two_point_stationary(law, q)
        qbd_sol = solve_r_matrix(build_resampling_generator(law, q))
        n_max = 300
        assert tv_distance(sol.probabilities(n_max), qbd_sol.marginal(n_max)) < 1e-6

    def test_cubic_roots_match_cardano_oracle(self):
        law = RateLawFinite([1.2, 0.4], [1.5, 1.0], [0.5, 0.5])
        sol = solve_two_point_stationary(law, 0.7)
        mine = np.sort_complex(np.roots(np.trim_zeros(sol.cubic, "b")[::-1]))
        oracle = np.sort_complex(cardano_cubic(sol.cubic[::-1]))
        assert mine == pytest.approx(oracle, rel=1e-8)

    def test_unstable_rejected(self):
        law = RateLawFinite([2.4, 0.4], [1.5, 1.0], [0.5, 0.5])
        with pytest.raises(ModelSpecError, match="unstable"):
            solve_two_point_stationary(law, 0.7)

    def test_zero_service_atom(self):
        # mu_i = 0 makes x2i = 0 and drops one unknown; system stays solvable
        # (P(Q=0) = 1-rho needs equal service rates, so check the oracle value)
        law = RateLawFinite([0.3, 0.2], [1.5, 0.0], [0.5, 0.5])
        sol = solve_two_point_stationary(law, 0.8)
        assert sol.pgf(1.0) == pytest.approx(1.0, abs=1e-8)
        mm = build_resampling_generator(law, 0.8)
        brute = truncated_ctmc_stationary(mm, 600)
        assert sol.pgf(0.0) == pytest.approx(brute[0].sum(), abs=1e-8)

    def test_stationary_fixed_point(self):
        # mixing the transient formula over the stationary law reproduces the PGF
        law, q = _reference_two_point_law(1.8, 1.0)
        sol = solve_two_point_stationary(law, q)
        probs = sol.probabilities(2000, n_points=8192)
        ns = np.arange(len(probs))
        for i in range(2):
            x2i = quadratic_roots(law.lambdas[i], law.mus[i], q).x2
            assert probs @ x2i**ns == pytest.approx(sol.u[i], abs=1e-7)
        for z in (0.1, 0.35, 0.6, 0.85):
            mixed = sum(
                law.pis[i] * sum(
                    probs[k] * transient_pgf_at_exp_epoch(
                        k, law.lambdas[i], law.mus[i], q, z)
                    for k in range(len(probs)))
                for i in range(2))
            assert mixed == pytest.approx(float(sol.pgf(z)), abs=1e-6)

    def test_probabilities_match_brute_force(self):
        law = RateLawFinite([1.0, 0.2], [1.2, 0.9], [0.4, 0.6])
        q = 0.5
        sol = solve_two_point_stationary(law, q)
        mm = build_resampling_generator(law, q)
        brute = truncated_ctmc_stationary(mm, 400).sum(axis=1)
        assert tv_distance(sol.probabilities(400), brute) < 1e-8

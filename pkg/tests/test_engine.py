"""Pool-engine checks against the deterministic moment machinery."""

import math

import numpy as np
import pytest

from lmelab import analytics as an
from lmelab import engine as en
from lmelab import moments as mo
from lmelab import theta as th


def small_params(**kw):
    base = dict(q=0.75, b=0.5, n_max=200, pool_size=16_000, seed=7)
    base.update(kw)
    return en.LmeParams(**base)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            en.LmeParams(q=0.4, b=0.5, n_max=10)
        with pytest.raises(ValueError):
            en.LmeParams(q=0.75, b=-1.0, n_max=10)
        with pytest.raises(ValueError):
            en.LmeParams(q=0.75, b=0.5, n_max=10, pool_size=100)
        with pytest.raises(ValueError):
            en.LmeParams(q=0.75, b=0.5, n_max=10, pool_size=10_001)


class TestExactTn:
    def test_q_one_is_exactly_one(self):
        assert en.exact_Tn(1.0, 0.123) == 1.0

    def test_small_eps_limits(self):
        # (1 - T_n)/eps -> T(q); the approach is O(eps^{2q-1}) for q < 1,
        # so the fractional-q case needs a smaller eps for 1% agreement
        t_frac = en.exact_Tn(0.75, 1e-3)
        assert t_frac > 1.0
        assert (1.0 - en.exact_Tn(0.75, 1e-5)) / 1e-5 == pytest.approx(
            an.T_of_q(0.75), rel=0.01
        )
        t_two = en.exact_Tn(2.0, 1e-3)
        assert t_two < 1.0
        assert (1.0 - t_two) / 1e-3 == pytest.approx(math.pi / 4, rel=0.01)

    def test_cache_round_trip(self):
        v1 = en.exact_Tn(0.8, 0.05)
        v2 = en.exact_Tn(0.8, 0.05)
        assert v1 == v2

    def test_matches_expect_theta(self):
        q, eps = 0.9, 0.02
        law = th.ThetaLaw(eps)
        direct = th.expect_theta(
            law, lambda t: (math.sin(t) ** 2) ** q + (math.cos(t) ** 2) ** q
        )
        assert en.exact_Tn(q, eps) == pytest.approx(direct, rel=1e-12)


class TestStep:
    def test_unit_pool_fixed_at_q_one(self):
        params = en.LmeParams(q=1.0, b=0.5, n_max=10, pool_size=4000, seed=1)
        pool = en.init_pool(params)
        stepped = en.step(pool, params)
        assert np.allclose(stepped.values, 1.0, atol=1e-15)
        assert stepped.logZ == 0.0
        assert stepped.n == 2

    def test_values_nonnegative_and_mean_near_one(self):
        params = small_params(n_max=50)
        pool = en.init_pool(params)
        for _ in range(30):
            pool = en.step(pool, params)
        assert np.all(pool.values >= 0.0)
        st = en._block_stats(pool, ())
        assert abs(st["mean"] - 1.0) <= 5.0 * st["mean_se"]

    def test_deterministic_replay(self):
        params = small_params(n_max=30)
        p1 = en.init_pool(params)
        p2 = en.init_pool(params)
        for _ in range(10):
            p1 = en.step(p1, params)
            p2 = en.step(p2, params)
        assert np.array_equal(p1.values, p2.values)

    def test_thread_count_invariance(self):
        base = dict(q=0.75, b=0.5, n_max=20, pool_size=8000, seed=3)
        r1 = en.run(en.LmeParams(**base, threads=1))
        r4 = en.run(en.LmeParams(**base, threads=4))
        assert np.array_equal(r1.final_pool.values, r4.final_pool.values)
        assert r1.logZ == r4.logZ


class TestRun:
    def test_single_checkpoint_trivial(self):
        rec = en.run(en.LmeParams(q=0.8, b=0.5, n_max=1, pool_size=3200, seed=0))
        assert rec.ns == [1]
        assert rec.logZ == [0.0]
        assert rec.moments[2.0] == [1.0]
        assert rec.means == [1.0]

    def test_second_moment_tracks_exact_trajectory(self):
        params = small_params(n_max=500, pool_size=32_000, seed=21)
        rec = en.run(params)
        traj = mo.moment_trajectory(params.q, params.b, params.n_max, kmax=3)
        for p in (2.0, 3.0):
            est = rec.moments[p][-1]
            se = rec.ses[p][-1]
            exact = traj[-1, int(p) - 1]
            assert abs(est - exact) <= 3.0 * se

    def test_mean_within_five_se_at_every_checkpoint(self):
        rec = en.run(small_params(n_max=500, seed=9))
        for m, se in zip(rec.means, rec.mean_ses):
            if se == 0.0:
                assert m == 1.0
            else:
                assert abs(m - 1.0) <= 5.0 * se

    def test_logz_is_deterministic_sum(self):
        params = small_params(n_max=64)
        rec = en.run(params)
        expected = sum(
            math.log(en.exact_Tn(params.q, params.b / n))
            for n in range(1, params.n_max)
        )
        assert rec.logZ[-1] == pytest.approx(expected, abs=1e-12)


class TestSlopeFit:
    def test_recovers_exact_line(self):
        ns = [64, 128, 256, 512, 1024]
        ys = [3.0 * math.log(n) - 1.0 for n in ns]
        s, se = en.fit_log_slope(ns, ys)
        assert s == pytest.approx(3.0, abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-10)

    def test_sqrt_correction_removes_transient(self):
        ns = [2**k for k in range(6, 14)]
        ys = [0.5 * math.log(n) + 2.0 / math.sqrt(n) for n in ns]
        s_plain, _ = en.fit_log_slope(ns, ys)
        s_corr, _ = en.fit_log_slope(ns, ys, sqrt_correction=True)
        assert abs(s_corr - 0.5) < 1e-10
        assert abs(s_plain - 0.5) > 1e-3

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            en.fit_log_slope([100, 200], [1.0, 2.0])


class TestHExponent:
    def test_scan_oracle_at_three(self):
        h = en.h_exponent(3.0)
        hs = np.linspace(0.2, 0.999, 2000)
        gs = [an.T_of_q(3 * x) - x * an.T_of_q(3.0) for x in hs]
        assert h == pytest.approx(hs[int(np.argmax(gs))], abs=1e-3)
        assert an.T_of_q(3 * h) - h * an.T_of_q(3.0) > 0

    def test_maximum_vanishes_at_critical_point(self):
        qc = an.find_qc()
        h = en.h_exponent(qc + 1e-3)
        g = an.T_of_q((qc + 1e-3) * h) - h * an.T_of_q(qc + 1e-3)
        assert 0 < g < 1e-4

    def test_interior_at_five(self):
        assert 0.1 < en.h_exponent(5.0) < 0.99

    def test_domain_error(self):
        with pytest.raises(ValueError):
            en.h_exponent(2.0)


class TestPaleyZygmund:
    def test_unit_pool(self):
        pool = en.init_pool(en.LmeParams(q=0.75, b=0.5, n_max=5, pool_size=3200))
        pz = en.paley_zygmund_bounds(pool, 2.0)
        assert pz.empirical_p_gt_2 == 0.0 <= pz.upper_p_gt_2
        assert pz.empirical_p_ge_half == 1.0 >= pz.lower_p_ge_half

    def test_bounds_hold_on_evolved_pool(self):
        params = small_params(n_max=300, seed=5)
        rec = en.run(params)
        pz = en.paley_zygmund_bounds(rec.final_pool, 2.0)
        n = rec.final_pool.values.size
        se = 1.0 / math.sqrt(n)  # Bernoulli SE upper bound
        assert pz.empirical_p_gt_2 <= pz.upper_p_gt_2 + 3 * se
        assert pz.empirical_p_ge_half >= pz.lower_p_ge_half - 3 * se

    def test_validation(self):
        pool = en.init_pool(en.LmeParams(q=0.75, b=0.5, n_max=5, pool_size=3200))
        with pytest.raises(ValueError):
            en.paley_zygmund_bounds(pool, 1.0)

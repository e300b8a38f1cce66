import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rarequeue.dist import ExponentialArrival, ExponentialService, GammaArrival, UniformService
from rarequeue.ldcalc import (
    RateContext,
    a_t,
    build_tilt_table,
    psi_t,
    psi_t_derivs,
    rate_I,
    rate_I_star,
    solve_T,
    solve_theta_t,
    tilde_I,
)
from rarequeue.oracle import i_star_poisson


@pytest.fixture(scope="module")
def pu_ctx(poisson_uniform):
    return RateContext(*poisson_uniform)


@pytest.fixture(scope="module")
def pe_ctx(poisson_exp):
    return RateContext(*poisson_exp)


def test_overloaded_context_rejected():
    with pytest.raises(ValueError):
        RateContext(ExponentialArrival(1.0), UniformService(0.0, 2.0))


class TestAT:
    def test_beyond_support(self, pu_ctx):
        assert a_t(pu_ctx, 1.0) == 1.0
        assert a_t(pu_ctx, 3.0) == 1.0

    def test_at_zero(self, pu_ctx):
        assert a_t(pu_ctx, 0.0) == pytest.approx(0.5, abs=1e-12)

    def test_exponential_service(self, pe_ctx):
        assert a_t(pe_ctx, 1.0) == pytest.approx(1 - 0.5 * math.exp(-2.0), abs=1e-10)
        assert a_t(pe_ctx, 1.0) == pytest.approx(0.932332, abs=1e-6)

    @given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
    def test_non_decreasing(self, t1, t2):
        ctx = RateContext(GammaArrival(0.5, 0.5), ExponentialService(0.5))
        lo, hi = sorted((t1, t2))
        assert a_t(ctx, lo) <= a_t(ctx, hi) + 1e-12


class TestPsiT:
    def test_zero_theta(self, gu_ctx):
        assert psi_t(gu_ctx, 0.7, 0.0) == 0.0

    def test_poisson_limit(self, pe_ctx):
        for th in (0.3, 1.0, 2.0):
            assert psi_t(pe_ctx, pe_ctx.y_cut, th) == pytest.approx(0.5 * math.expm1(th), rel=1e-9)

    def test_gauss_oracle(self, gu_ctx):
        arr = gu_ctx.arrival
        x, w = np.polynomial.legendre.leggauss(60)
        u = 0.5 * (x + 1.0)
        vals = [arr.psi(math.log(math.e * (1 - v) + v)) for v in u]
        want = 0.5 * float(np.dot(w, vals))
        assert psi_t(gu_ctx, 1.0, 1.0) == pytest.approx(want, rel=1e-8)

    def test_derivative_at_zero(self, pu_ctx, gu_ctx):
        assert psi_t_derivs(pu_ctx, 1.0, 0.0)[0] == pytest.approx(0.5, abs=1e-10)
        assert psi_t_derivs(gu_ctx, 1.0, 0.0)[0] == pytest.approx(0.5, abs=1e-10)

    @pytest.mark.parametrize("t", [0.3, 0.8, 1.0, 2.0])
    @pytest.mark.parametrize("theta", [0.2, 1.0, 1.7])
    def test_first_derivative_finite_differences(self, gu_ctx, t, theta):
        h = 1e-5
        fd = (psi_t(gu_ctx, t, theta + h) - psi_t(gu_ctx, t, theta - h)) / (2 * h)
        assert psi_t_derivs(gu_ctx, t, theta)[0] == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize("theta", [0.2, 1.0, 1.7])
    def test_second_derivative_finite_differences(self, gu_ctx, theta):
        h = 1e-4
        fd = (psi_t_derivs(gu_ctx, 0.8, theta + h)[0] - psi_t_derivs(gu_ctx, 0.8, theta - h)[0]) / (2 * h)
        assert psi_t_derivs(gu_ctx, 0.8, theta)[1] == pytest.approx(fd, rel=1e-5)

    def test_strictly_convex(self, gu_ctx):
        assert psi_t_derivs(gu_ctx, 1.0, 1.0)[1] > 0

    @given(st.floats(0.05, 1.5), st.floats(0.05, 1.5), st.floats(0.1, 2.0))
    def test_monotone_in_t(self, t1, t2, theta):
        ctx = RateContext(GammaArrival(0.5, 0.5), UniformService(0.0, 1.0))
        lo, hi = sorted((t1, t2))
        assert psi_t(ctx, lo, theta) <= psi_t(ctx, hi, theta) * (1 + 1e-9)

    def test_stable_under_halved_tolerance(self, gamma_uniform):
        a = RateContext(*gamma_uniform)
        b = RateContext(*gamma_uniform, quad_tol=a.quad_tol / 2)
        for t in (0.4, 1.0):
            assert psi_t(a, t, 1.3) == pytest.approx(psi_t(b, t, 1.3), rel=10 * a.quad_tol)


class TestRoots:
    def test_poisson_theta_inf(self, pe_ctx):
        theta, I = rate_I_star(pe_ctx)
        assert theta == pytest.approx(math.log(2.0), abs=1e-8)
        assert I == pytest.approx(0.193147, abs=1e-6)

    def test_theta_constant_past_support(self, gu_ctx):
        th1 = solve_theta_t(gu_ctx, 1.0)
        for t in (1.2, 2.0, 5.0):
            assert solve_theta_t(gu_ctx, t) == pytest.approx(th1, rel=1e-9)

    def test_theta_non_increasing(self, gu_ctx):
        ts = np.arange(0.2, 3.01, 0.2)
        th = [solve_theta_t(gu_ctx, float(t)) for t in ts]
        assert all(x > 0 for x in th)
        assert all(a >= b - 1e-9 for a, b in zip(th, th[1:]))

    def test_root_residual(self, gu_ctx):
        for t in (0.3, 0.9):
            th = solve_theta_t(gu_ctx, t)
            a = a_t(gu_ctx, t)
            assert abs(psi_t_derivs(gu_ctx, t, th)[0] - a) <= 1e-9 * a

    def test_poisson_rate_limit(self, pe_ctx):
        assert rate_I(pe_ctx, pe_ctx.y_cut) == pytest.approx(0.193147, abs=1e-6)

    def test_bounded_support_rate_constancy(self, gu_ctx):
        assert rate_I(gu_ctx, 1.0) == pytest.approx(rate_I(gu_ctx, 2.0), abs=1e-8)
        assert rate_I_star(gu_ctx)[1] == pytest.approx(rate_I(gu_ctx, 1.0), abs=1e-8)

    def test_rate_non_increasing(self, pe_ctx):
        ts = np.linspace(0.1, 4.0, 20)
        r = [rate_I(pe_ctx, float(t)) for t in ts]
        assert all(a >= b - 1e-9 for a, b in zip(r, r[1:]))
        assert r[-1] >= rate_I_star(pe_ctx)[1] - 1e-9

    @pytest.mark.parametrize("rho", [0.25, 0.5, 0.8])
    def test_poisson_closed_form(self, rho):
        ctx = RateContext(ExponentialArrival(1.0), ExponentialService(rho))
        assert rate_I_star(ctx)[1] == pytest.approx(i_star_poisson(rho), abs=1e-6)


class TestHorizon:
    def test_tilde_I_blows_up_near_zero(self, gu_ctx):
        vals = [tilde_I(gu_ctx, t) for t in (0.5, 0.1, 0.01, 0.001)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_T_condition(self, gu_ctx):
        T = solve_T(gu_ctx)
        I = rate_I_star(gu_ctx)[1]
        assert tilde_I(gu_ctx, T) > 2 * I
        assert 0 < T < gu_ctx.service.mean

    def test_table_invariants(self, gu_ctx):
        tab = build_tilt_table(gu_ctx, 30, c=1.0)
        assert tab.delta == pytest.approx(1 / 30)
        assert np.all(tab.theta > 0)
        assert np.all(np.diff(tab.theta) <= 1e-9)
        assert np.all(np.diff(tab.rate) <= 1e-9)
        assert np.all(tab.rate >= tab.I_star - 1e-8)
        assert tilde_I(gu_ctx, tab.T) > 2 * tab.I_star
        assert tab.theta_at(0) == 0.0
        assert tab.theta_at(1) == tab.theta[1]
        assert tab.theta_at(10 * tab.K_max) == tab.theta[-1]

    def test_warm_start_matches_cold_start(self, gu_ctx):
        tab = build_tilt_table(gu_ctx, 30, c=1.0)
        rng = np.random.default_rng(5)
        for k in rng.choice(tab.K_max + 1, size=20, replace=False):
            cold = solve_theta_t(gu_ctx, float(tab.t[k]))
            assert tab.theta[k] == pytest.approx(cold, rel=1e-10, abs=1e-12)

    def test_bad_arguments(self, gu_ctx):
        with pytest.raises(ValueError):
            build_tilt_table(gu_ctx, 0)
        with pytest.raises(ValueError):
            build_tilt_table(gu_ctx, 10, c=0.0)

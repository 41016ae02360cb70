import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import digamma, gamma, rgamma

from fracsens.errors import DomainError, SingularityError
from fracsens.fracops import (
    FracOrder,
    SampledFunction,
    Side,
    caputo_frac_deriv_quadrature,
    caputo_logpow_quadrature,
    digamma_coeff,
    frac_deriv_basis_spatial,
    frac_deriv_basis_temporal,
    logpow_basis_spatial,
    logpow_basis_temporal,
    logpow_deriv_power,
    logpow_deriv_quadrature,
    rl_frac_deriv_power,
    rl_frac_deriv_quadrature,
)
from fracsens.specfun import spatial_basis, spatial_test


def power_function(p, a=0.0, b=1.0):
    return SampledFunction(
        (a, b),
        lambda x: np.power(np.asarray(x) - a, p),
        lambda x: p * np.power(np.asarray(x) - a, p - 1) if p != 0 else 0 * np.asarray(x),
        lambda x: p * (p - 1) * np.power(np.asarray(x) - a, p - 2) if p not in (0, 1) else 0 * np.asarray(x),
    )


def _mp_definition(u, sigma, x, a, log_kernel):
    # n-th derivative of the (log-)power convolution, all in extended precision
    mp.mp.dps = 30
    n = math.ceil(sigma)

    def integral(y):
        kernel = (lambda s: mp.log(y - s) * (y - s) ** (n - sigma - 1)) if log_kernel \
            else (lambda s: (y - s) ** (n - sigma - 1))
        return mp.quad(lambda s: kernel(s) * u(s), [a, y])

    return float(mp.diff(integral, x, n) / mp.gamma(n - sigma))


def mp_logpow(u, sigma, x, a=0.0):
    """Log-Pow value straight from its definition; ``u`` must be mpmath-compatible."""
    return _mp_definition(u, sigma, x, a, True)


def mp_rl(u, sigma, x, a=0.0):
    """Left Riemann-Liouville derivative straight from its definition."""
    return _mp_definition(u, sigma, x, a, False)


class TestFracOrder:
    def test_ceiling(self):
        assert FracOrder(0.3).n == 1 and FracOrder(1.7).n == 2

    @pytest.mark.parametrize("bad", [-0.1, 1.0, 2.0, 2.5])
    def test_rejects(self, bad):
        with pytest.raises(DomainError):
            FracOrder(bad)


class TestPowerRule:
    def test_zero_order_is_identity(self):
        assert rl_frac_deriv_power(2.5, 0.0, "left", 0.7, 0.0) == pytest.approx(0.7**2.5, rel=1e-15)

    def test_half_derivative_of_t(self):
        val = rl_frac_deriv_power(1.0, 0.5, Side.LEFT, 0.36, 0.0)
        assert val == pytest.approx(2 / math.sqrt(math.pi) * 0.6, rel=1e-14)

    def test_fabricated_pattern(self):
        t = 0.8
        expected = gamma(4.25) / gamma(3.75) * t**2.75
        assert rl_frac_deriv_power(3.25, 0.5, Side.LEFT, t, 0.0) == pytest.approx(expected, rel=1e-14)

    def test_right_side_mirror(self):
        assert rl_frac_deriv_power(2.0, 0.4, Side.RIGHT, 0.3, 1.0) == pytest.approx(
            rl_frac_deriv_power(2.0, 0.4, Side.LEFT, 0.7, 0.0), rel=1e-15)

    def test_singular_at_terminal(self):
        with pytest.raises(SingularityError):
            rl_frac_deriv_power(0.2, 0.5, Side.LEFT, 0.0, 0.0)

    def test_against_quadrature(self):
        u = power_function(2.0)
        for x in (0.1, 0.5, 0.93):
            assert rl_frac_deriv_quadrature(u, 0.5, Side.LEFT, x) == pytest.approx(
                rl_frac_deriv_power(2.0, 0.5, Side.LEFT, x, 0.0), rel=1e-8)


class TestQuadratureOperators:
    def test_constant(self):
        u = SampledFunction((0.0, 1.0), lambda x: 3.0 + 0 * np.asarray(x), lambda x: 0 * np.asarray(x))
        for s in (0.2, 0.7):
            assert rl_frac_deriv_quadrature(u, s, Side.LEFT, 0.4) == pytest.approx(
                3.0 * 0.4**-s / gamma(1 - s), rel=1e-12)

    def test_sine_against_series(self):
        # RL of sin from 0: sum_k (-1)^k x^(2k+1-s) / Gamma(2k+2-s)
        s, x = 0.3, 0.7
        series = sum((-1) ** k * x ** (2 * k + 1 - s) / gamma(2 * k + 2 - s) for k in range(25))
        u = SampledFunction((0.0, 1.0), np.sin, np.cos, lambda y: -np.sin(y))
        assert rl_frac_deriv_quadrature(u, s, Side.LEFT, x) == pytest.approx(series, abs=1e-6)
        assert rl_frac_deriv_quadrature(u, s, Side.LEFT, x) == pytest.approx(series, rel=1e-10)

    @pytest.mark.parametrize("sigma", [0.25, 0.5, 0.75])
    def test_rl_caputo_relation(self, sigma):
        u = SampledFunction((0.0, 1.0), lambda x: np.exp(x), lambda x: np.exp(x), lambda x: np.exp(x))
        for x in (0.2, 0.55, 0.9):
            rl = rl_frac_deriv_quadrature(u, sigma, Side.LEFT, x)
            caputo = caputo_frac_deriv_quadrature(u, sigma, Side.LEFT, x)
            assert abs(rl - caputo - x**-sigma / gamma(1 - sigma)) < 1e-8

    def test_second_order_range(self):
        u = power_function(3.0)
        assert rl_frac_deriv_quadrature(u, 1.5, Side.LEFT, 0.6) == pytest.approx(
            rl_frac_deriv_power(3.0, 1.5, Side.LEFT, 0.6, 0.0), rel=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.sampled_from([0.3, 0.6, 1.4]),
           st.floats(0.05, 0.95))
    def test_linearity(self, c1, c2, sigma, x):
        u = SampledFunction((0.0, 1.0), np.exp, np.exp, np.exp)
        v = SampledFunction((0.0, 1.0), np.cos, lambda y: -np.sin(y), lambda y: -np.cos(y))
        combo = u.scaled(c1) + v.scaled(c2)
        for op in (rl_frac_deriv_quadrature, logpow_deriv_quadrature):
            lhs = op(combo, sigma, Side.LEFT, x)
            rhs = c1 * op(u, sigma, Side.LEFT, x) + c2 * op(v, sigma, Side.LEFT, x)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestLogPow:
    def test_unit_distance(self):
        expected = (digamma(0.5) - digamma(2.5)) * gamma(3) / gamma(2.5)
        assert logpow_deriv_power(2.0, 0.5, Side.LEFT, 1.0, 0.0) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("p", [0.5, 1.75, 3.0])
    def test_log_term_drops_at_unit_distance(self, p):
        g = gamma(p + 1) / gamma(p + 0.6)
        assert logpow_deriv_power(p, 0.4, Side.LEFT, 1.5, 0.5) == pytest.approx(
            (digamma(0.6) - digamma(p + 0.6)) * g, rel=1e-13)

    def test_closed_form_against_quadrature(self):
        u = power_function(3.25)
        assert logpow_deriv_quadrature(u, 0.5, Side.LEFT, 0.8) == pytest.approx(
            logpow_deriv_power(3.25, 0.5, Side.LEFT, 0.8, 0.0), abs=1e-7)

    @pytest.mark.parametrize("p,sigma,x", [(2.0, 0.5, 0.6), (1.3, 0.35, 0.9), (2.5, 1.4, 0.7)])
    def test_closed_form_against_definition(self, p, sigma, x):
        oracle = mp_logpow(lambda s: s**p, sigma, x)
        assert logpow_deriv_power(p, sigma, Side.LEFT, x, 0.0) == pytest.approx(oracle, rel=1e-8)

    def test_zero_function(self):
        u = SampledFunction((0.0, 1.0), lambda x: 0 * np.asarray(x), lambda x: 0 * np.asarray(x))
        assert logpow_deriv_quadrature(u, 0.4, Side.LEFT, 0.5) == 0.0

    def test_part_b_vanishing_boundary(self):
        u = power_function(2.6)
        x = 0.7
        assert logpow_deriv_quadrature(u, 1.3, Side.LEFT, x) == pytest.approx(
            caputo_logpow_quadrature(u, 1.3, Side.LEFT, x), abs=1e-14)

    @pytest.mark.parametrize("sigma", [0.3, 0.5, 1.5])
    def test_order_derivative_identity(self, sigma):
        p, x, h = 2.7, 0.65, 1e-5
        n = math.ceil(sigma)
        fd = (rl_frac_deriv_power(p, sigma + h, "left", x, 0.0)
              - rl_frac_deriv_power(p, sigma - h, "left", x, 0.0)) / (2 * h)
        rhs = digamma_coeff(n, sigma) * rl_frac_deriv_power(p, sigma, "left", x, 0.0) \
            - logpow_deriv_power(p, sigma, "left", x, 0.0)
        assert fd == pytest.approx(rhs, abs=1e-5)

    def test_right_side(self):
        u = SampledFunction((0.0, 1.0), lambda x: (1 - np.asarray(x)) ** 2.2,
                            lambda x: -2.2 * (1 - np.asarray(x)) ** 1.2,
                            lambda x: 2.64 * (1 - np.asarray(x)) ** 0.2)
        assert logpow_deriv_quadrature(u, 0.6, Side.RIGHT, 0.3) == pytest.approx(
            logpow_deriv_power(2.2, 0.6, Side.RIGHT, 0.3, 1.0), rel=1e-8)


class TestBoundarySplitIdentities:
    """Log-Pow boundary-term identities checked on random interior points."""

    def test_part_a(self):
        s, a = 0.4, 0.0
        u = SampledFunction((a, 1.0), lambda x: 1 + np.asarray(x) ** 2.3,
                            lambda x: 2.3 * np.asarray(x) ** 1.3,
                            lambda x: 2.99 * np.asarray(x) ** 0.3)
        rng = np.random.default_rng(7)
        for x in rng.uniform(0.02, 0.98, 20):
            closed = logpow_deriv_power(0.0, s, "left", x, a) + logpow_deriv_power(2.3, s, "left", x, a)
            boundary = np.log(x - a) / (gamma(1 - s) * (x - a) ** s)
            assert abs(closed - (boundary + caputo_logpow_quadrature(u, s, "left", x))) < 1e-7

    def test_part_b(self):
        s, a = 1.6, 0.0
        u = SampledFunction((a, 1.0), lambda x: 1 + 2 * np.asarray(x) + np.asarray(x) ** 2.3,
                            lambda x: 2 + 2.3 * np.asarray(x) ** 1.3,
                            lambda x: 2.99 * np.asarray(x) ** 0.3)
        rng = np.random.default_rng(11)
        for x in rng.uniform(0.02, 0.98, 20):
            closed = (logpow_deriv_power(0.0, s, "left", x, a)
                      + 2 * logpow_deriv_power(1.0, s, "left", x, a)
                      + logpow_deriv_power(2.3, s, "left", x, a))
            ell = np.log(x)
            boundary = ((1 + (1 - s) * ell) * x**-s + 2 * ell * x ** (1 - s)) / gamma(2 - s)
            assert abs(closed - (boundary + caputo_logpow_quadrature(u, s, "left", x))) < 1e-7


class TestDigammaCoefficient:
    def test_values(self):
        assert digamma_coeff(1, 0.5) == pytest.approx(-1.9635100, abs=1e-7)
        assert digamma_coeff(2, 1.0) == pytest.approx(-0.5772157, abs=1e-7)

    @pytest.mark.parametrize("n,sigma", [(1, 0.2), (1, 0.8), (2, 1.3), (2, 1.9)])
    def test_finite_difference(self, n, sigma):
        h = 1e-6
        # d/dsigma of 1/Gamma(n - sigma), central difference in sigma
        fd = gamma(n - sigma) * (rgamma(n - sigma - h) - rgamma(n - sigma + h)) / (2 * h)
        assert digamma_coeff(n, sigma) == pytest.approx(fd, abs=1e-5)

    def test_pole(self):
        with pytest.raises(DomainError):
            digamma_coeff(1, 1.0)


class TestBasisDerivatives:
    def test_first_temporal_mode_constant(self):
        eta = np.linspace(-0.9, 1, 7)
        np.testing.assert_allclose(frac_deriv_basis_temporal(1, 0.3, 0.3, eta),
                                   gamma(1.3), rtol=1e-14)

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_polynomial_when_order_matches(self, n):
        tau = 0.35
        eta = np.linspace(-0.95, 0.95, n + 1)
        vals = frac_deriv_basis_temporal(n, tau, tau, eta)
        # degree n-1 polynomial: the n-th divided difference vanishes
        coef = np.polynomial.polynomial.polyfit(eta, vals, n - 1)
        np.testing.assert_allclose(np.polynomial.polynomial.polyval(eta, coef), vals, atol=1e-10)

    def test_continuity_in_tau(self):
        eta = np.linspace(-0.8, 0.9, 9)
        a = frac_deriv_basis_temporal(3, 0.3, 0.3, eta)
        b = frac_deriv_basis_temporal(3, 0.3 + 1e-8, 0.3, eta)
        np.testing.assert_allclose(a, b, atol=1e-6)

    @pytest.mark.parametrize("n,tau,order", [(1, 0.25, 0.25), (3, 0.25, 0.5), (4, 0.4, 0.3)])
    def test_temporal_against_definition(self, n, tau, order):
        oracle = mp_rl(lambda s: (1 + s) ** tau * mp.jacobi(n - 1, -tau, tau, s), order, 0.4, -1.0)
        assert frac_deriv_basis_temporal(n, tau, order, 0.4) == pytest.approx(oracle, rel=1e-9)

    def test_temporal_right_matches_reflection(self):
        eta = np.linspace(-0.9, 0.9, 11)
        for n in range(1, 6):
            left = frac_deriv_basis_temporal(n, 0.3, 0.45, -eta, Side.LEFT)
            right = frac_deriv_basis_temporal(n, 0.3, 0.45, eta, Side.RIGHT)
            np.testing.assert_allclose(right, (-1) ** (n - 1) * left, rtol=1e-12, atol=1e-13)

    def test_spatial_regular(self):
        xi = np.linspace(-1, 1, 50)
        for m in range(1, 12):
            for side in Side:
                vals = frac_deriv_basis_spatial(m, 0.75, side, xi[1:-1])
                assert np.all(np.isfinite(vals))

    def test_spatial_against_quadrature(self):
        m, mu, x = 1, 0.75, 0.5
        u = SampledFunction((-1.0, 1.0), lambda y: spatial_basis(m, y),
                            lambda y: 3.0 * np.asarray(y),
                            lambda y: 3.0 + 0 * np.asarray(y))
        # phi_1 = P_2 - P_0 = 1.5 (x^2 - 1), phi_1' = 3x, phi_1'' = 3
        assert frac_deriv_basis_spatial(m, mu, Side.LEFT, x) == pytest.approx(
            rl_frac_deriv_quadrature(u, mu, Side.LEFT, x), abs=1e-7)

    @pytest.mark.parametrize("m", [1, 2, 5, 8])
    def test_spatial_reflection(self, m):
        xi = np.linspace(-0.9, 0.9, 13)
        left = frac_deriv_basis_spatial(m, 0.65, Side.LEFT, -xi)
        right = frac_deriv_basis_spatial(m, 0.65, Side.RIGHT, xi)
        # phi_m has parity (-1)^(m+1)
        np.testing.assert_allclose(right, (-1) ** (m + 1) * left, rtol=1e-11, atol=1e-12)

    def test_spatial_test_scale(self):
        xi = np.linspace(-0.9, 0.9, 5)
        np.testing.assert_allclose(frac_deriv_basis_spatial(2, 0.7, "right", xi, test=True),
                                   frac_deriv_basis_spatial(2, 0.7, "right", xi), rtol=1e-14)
        assert spatial_test(2, 0.3) == pytest.approx(spatial_basis(2, 0.3))

    def test_logpow_basis_against_definition(self):
        tau, order, x = 0.3, 0.6, 0.2
        oracle = mp_logpow(lambda s: (1 + s) ** tau * mp.jacobi(2, -tau, tau, s), order, x, a=-1.0)
        assert logpow_basis_temporal(3, tau, order, x) == pytest.approx(oracle, rel=1e-8)
        phi2 = lambda s: 3 * (mp.legendre(3, s) - mp.legendre(1, s))
        oracle = mp_logpow(phi2, 1.4, x, a=-1.0)
        assert logpow_basis_spatial(2, 1.4, "left", x) == pytest.approx(oracle, rel=1e-8)

    def test_test_function_derivative_from_right(self):
        # the right derivative of the temporal test function uses the same Jacobi identity
        mp.mp.dps = 25
        tau, order, x = 0.3, 0.45, -0.2
        integral = lambda y: mp.quad(lambda s: (s - y) ** (-order)
                                     * (1 - s) ** tau * mp.jacobi(1, tau, -tau, s), [y, 1])
        oracle = -float(mp.diff(integral, x, 1) / mp.gamma(1 - order))
        assert frac_deriv_basis_temporal(2, tau, order, x, Side.RIGHT) == pytest.approx(oracle, rel=1e-9)

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import digamma, gamma

from fracsens.assembly import (
    assemble,
    build_fse_load,
    build_load,
    build_spatial_matrices,
    build_temporal_matrices,
    mode_apply,
    spatial_mass,
    spatial_stiffness_standard,
)
from fracsens.errors import ConfigurationError
from fracsens.fields import FabricatedField, PowerTerm, SeparableFunction
from fracsens.fracops import Side, frac_deriv_basis_spatial, frac_deriv_basis_temporal
from fracsens.model import ModelParams
from fracsens.specfun import (
    BasisConfig,
    gauss_rule,
    polyfrac_second,
    spatial_basis,
    spatial_test,
)


def fpde(alpha=0.5, beta=1.5, **kw):
    return ModelParams(alpha=alpha, betas=(beta,), **kw)


class TestTemporalMatrices:
    def test_single_mode_value(self):
        params = ModelParams(alpha=0.5, kind="fivp", time_horizon=1.0)
        st, _ = build_temporal_matrices(params, BasisConfig(n_temporal=1))
        # both half derivatives equal Gamma(1.25); (2/T)^alpha * T/2 * 2 on [-1, 1]
        integrand = lambda eta: (frac_deriv_basis_temporal(1, 0.25, 0.25, eta)
                                 * frac_deriv_basis_temporal(1, 0.25, 0.25, eta, Side.RIGHT))
        oracle = 2**0.5 * 0.5 * integrate.quad(integrand, -1, 1, epsabs=1e-14)[0]
        assert st[0, 0] == pytest.approx(oracle, rel=1e-10)
        assert st[0, 0] == pytest.approx(math.sqrt(2) * gamma(1.25) ** 2, rel=1e-12)

    def test_mass_tends_to_legendre_gram(self):
        params = ModelParams(alpha=0.5, kind="fivp", time_horizon=1.0)
        _, mt = build_temporal_matrices(params, BasisConfig(n_temporal=6, tau=1e-9))
        expected = np.diag([0.5 * 2.0 / (2 * n - 1) for n in range(1, 7)])
        np.testing.assert_allclose(mt, expected, atol=1e-7)
        odd = (np.add.outer(np.arange(6), np.arange(6)) % 2) == 1
        assert np.max(np.abs(mt[odd])) < 1e-7

    def test_quadrature_saturation(self):
        params = fpde(0.6, 1.3)
        a = assemble(params, BasisConfig(n_temporal=7, m_spatial=(6,), quad_extra=10))
        b = assemble(params, BasisConfig(n_temporal=7, m_spatial=(6,), quad_extra=40))
        for x, y in [(a.st, b.st), (a.mt, b.mt), (a.kx[0], b.kx[0]), (a.lt, b.lt), (a.lx[0], b.lx[0])]:
            assert np.max(np.abs(x - y)) < 1e-11 * max(1.0, np.max(np.abs(y)))

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9])
    def test_projection_identity(self, alpha):
        # (D^alpha psi_n, Psi_k) through a Gauss-Jacobi rule matching the full-order weights
        tau, n_modes = alpha / 2, 5
        params = ModelParams(alpha=alpha, kind="fivp", time_horizon=2.0)
        st, _ = build_temporal_matrices(params, BasisConfig(n_temporal=n_modes))
        rule = gauss_rule("gauss-jacobi", 30, tau, tau - alpha)
        x, w = rule.nodes, rule.weights
        full = np.array([frac_deriv_basis_temporal(n, tau, alpha, x) / (1 + x) ** (tau - alpha)
                         for n in range(1, n_modes + 1)])
        tests = np.array([polyfrac_second(k, tau, x) / (1 - x) ** tau for k in range(1, n_modes + 1)])
        direct = (tests * w) @ full.T
        assert np.max(np.abs(direct - st)) < 1e-7

    def test_affine_scaling(self):
        alpha = 0.7
        cfg = BasisConfig(n_temporal=5)
        d1 = assemble(ModelParams(alpha=alpha, kind="fivp", time_horizon=1.0), cfg)
        d2 = assemble(ModelParams(alpha=alpha, kind="fivp", time_horizon=2.0), cfg)
        np.testing.assert_allclose(d1.st, 2**alpha * 0.5 * d2.st, rtol=1e-10)
        np.testing.assert_allclose(d1.mt, 0.5 * d2.mt, rtol=1e-10)


class TestSpatialMatrices:
    def test_mass_closed_form(self):
        rule = gauss_rule("gauss-legendre", 40)
        x, w = rule.nodes, rule.weights
        m = 9
        quad = np.array([[np.sum(w * spatial_basis(c, x) * spatial_test(r, x)) for c in range(1, m + 1)]
                         for r in range(1, m + 1)])
        np.testing.assert_allclose(spatial_mass(m), quad, atol=1e-12)

    def test_mass_pattern_and_symmetry(self):
        mass = spatial_mass(12)
        r, m = np.indices(mass.shape)
        assert np.all(mass[~np.isin(np.abs(r - m), [0, 2])] == 0.0)
        assert np.all(mass[np.isin(np.abs(r - m), [0, 2])] != 0.0)
        np.testing.assert_allclose(mass, mass.T, atol=1e-12)

    def test_zero_coefficient(self):
        params = ModelParams(alpha=0.5, betas=(1.5,), coeffs=(0.0,))
        s, _ = build_spatial_matrices(params, BasisConfig(n_temporal=3, m_spatial=(4,)), 0)
        assert np.all(s == 0.0)

    @pytest.mark.parametrize("beta", [1.2, 1.5, 1.8])
    @pytest.mark.parametrize("side", [Side.LEFT, Side.RIGHT])
    def test_integration_by_parts(self, beta, side):
        m_modes = 6
        half = spatial_stiffness_standard(m_modes, beta, side, 30)
        a, b = (0.0, 1.0 - beta) if side is Side.LEFT else (1.0 - beta, 0.0)
        rule = gauss_rule("gauss-jacobi", 30, a, b)
        x, w = rule.nodes, rule.weights
        weight = (1 - x) ** a * (1 + x) ** b
        full = np.array([frac_deriv_basis_spatial(m, beta, side, x) / weight for m in range(1, m_modes + 1)])
        tests = np.array([spatial_test(r, x) for r in range(1, m_modes + 1)])
        direct = (tests * w) @ full.T
        assert np.max(np.abs(direct - half)) < 1e-7

    def test_affine_scaling(self):
        beta = 1.35
        cfg = BasisConfig(n_temporal=2, m_spatial=(5,))
        ref = assemble(fpde(0.5, beta, space_bounds=((-1.0, 1.0),)), cfg)
        wide = assemble(fpde(0.5, beta, space_bounds=((0.0, 4.0),)), cfg)
        np.testing.assert_allclose(wide.kx[0], 0.5**beta * 2.0 * ref.kx[0], rtol=1e-10)
        np.testing.assert_allclose(wide.mx[0], 2.0 * ref.mx[0], rtol=1e-12)

    def test_sign_and_coefficient(self):
        cfg = BasisConfig(n_temporal=2, m_spatial=(4,))
        d = assemble(ModelParams(alpha=0.5, betas=(1.5,), coeffs=(0.3,)), cfg)
        np.testing.assert_allclose(d.ops.s_spatial[0], -0.3 * d.kx[0])
        fb = assemble(ModelParams(betas=(1.5,), coeffs=(0.3,), kind="fbvp"), BasisConfig(m_spatial=(4,)))
        np.testing.assert_allclose(fb.ops.s_spatial[0], 0.3 * fb.kx[0])

    def test_cached_object_reused(self):
        params, cfg = fpde(), BasisConfig(n_temporal=3, m_spatial=(3,))
        assert assemble(params, cfg) is assemble(params, cfg)
        assert assemble(params, cfg).ops is assemble(params, cfg).ops

    def test_matrices_read_only(self):
        ops = assemble(fpde(), BasisConfig(n_temporal=3, m_spatial=(3,))).ops
        with pytest.raises(ValueError):
            ops.m_spatial[0][0, 0] = 1.0


def physical_tests(params, cfg):
    tau = 0.5 * params.alpha
    T = params.time_horizon
    (a, b), = params.space_bounds

    def time_test(k, t):
        return polyfrac_second(k, tau, 2 * t / T - 1)

    def space_test(r, x):
        return spatial_test(r, 2 * (x - a) / (b - a) - 1)

    return time_test, space_test


class TestLoads:
    params = fpde(0.5, 1.5, time_horizon=1.5, space_bounds=((0.0, 2.0),))
    cfg = BasisConfig(n_temporal=4, m_spatial=(5,))

    def test_zero(self):
        assert np.all(build_load(None, self.params, self.cfg) == 0.0)
        assert np.all(build_load(lambda t, x: 0 * t, self.params, self.cfg) == 0.0)

    def test_separable_outer_product(self):
        time_test, space_test = physical_tests(self.params, self.cfg)
        mt = np.array([integrate.quad(lambda t: t**2 * time_test(k, t), 0, 1.5, epsabs=1e-14)[0]
                       for k in range(1, 5)])
        mx = np.array([integrate.quad(lambda x: np.cos(x) * space_test(r, x), 0, 2, epsabs=1e-14)[0]
                       for r in range(1, 6)])
        load = build_load(lambda t, x: t**2 * np.cos(x), self.params, self.cfg)
        np.testing.assert_allclose(load, np.outer(mt, mx), atol=1e-11)

    def test_separable_function_path(self):
        f = SeparableFunction(2, ((1.0, (lambda t: t**2, np.cos)),))
        np.testing.assert_allclose(build_load(f, self.params, self.cfg),
                                   build_load(lambda t, x: t**2 * np.cos(x), self.params, self.cfg),
                                   atol=1e-11)

    def test_test_function_reproduces_gram_column(self):
        time_test, space_test = physical_tests(self.params, self.cfg)
        k0, r0 = 2, 3
        gt = np.array([integrate.quad(lambda t: time_test(k, t) * time_test(k0, t), 0, 1.5,
                                      epsabs=1e-14, limit=200)[0] for k in range(1, 5)])
        x, w = gauss_rule("gauss-legendre", 20).mapped(0.0, 2.0)
        gx = np.array([np.sum(w * space_test(r, x) * space_test(r0, x)) for r in range(1, 6)])
        load = build_load(lambda t, x: time_test(k0, t) * space_test(r0, x), self.params, self.cfg)
        np.testing.assert_allclose(load, np.outer(gt, gx), atol=1e-9)

    def test_shape_mismatch(self):
        f = SeparableFunction(1, ((1.0, (np.cos,)),))
        with pytest.raises(ConfigurationError):
            build_load(f, self.params, self.cfg)


class TestSensitivityLoads:
    def test_zero_field(self):
        params, cfg = fpde(), BasisConfig(n_temporal=3, m_spatial=(4,))
        for name in params.param_names():
            load = build_fse_load(name, np.zeros((3, 4)), None, params, cfg)
            assert np.all(load == 0.0)

    def test_coefficient_load_is_stiffness_action(self):
        params = ModelParams(alpha=0.4, betas=(1.6,), coeffs=(0.7,))
        cfg = BasisConfig(n_temporal=4, m_spatial=(5,))
        u = np.random.default_rng(3).standard_normal((4, 5))
        ops = assemble(params, cfg).ops
        load = build_fse_load("k_1", u, None, params, cfg)
        np.testing.assert_allclose(load, -mode_apply(u, [ops.m_temporal, ops.s_spatial[0]]) / 0.7,
                                   rtol=1e-13, atol=1e-15)

    def test_alpha_load_matches_gamma_ratio_derivative(self):
        alpha, p = 0.5, 3.25
        params = ModelParams(alpha=alpha, betas=(1.5,), sides="left")
        cfg = BasisConfig(n_temporal=4, m_spatial=(4,))
        field = FabricatedField((PowerTerm(1.0, ((p, 0.0), (3.75, 0.0))),))
        load = build_fse_load("alpha", field, None, params, cfg)
        # d/dalpha of G t^(p - alpha) with G = Gamma(p+1)/Gamma(p+1-alpha)
        g = gamma(p + 1) / gamma(p + 1 - alpha)
        dforce = lambda t: g * t ** (p - alpha) * (digamma(p + 1 - alpha) - np.log(t))
        tau = alpha / 2
        mt = np.array([integrate.quad(lambda t: dforce(t) * polyfrac_second(k, tau, 2 * t - 1), 0, 1,
                                      epsabs=1e-13, limit=200)[0] for k in range(1, 5)])
        mx = np.array([integrate.quad(lambda x: (1 + x) ** 3.75 * spatial_test(r, x), -1, 1,
                                      epsabs=1e-14)[0] for r in range(1, 5)])
        np.testing.assert_allclose(load, -np.outer(mt, mx), rtol=1e-6, atol=1e-10)

    def test_missing_field(self):
        with pytest.raises(ConfigurationError):
            build_fse_load("alpha", None, None, fpde(), BasisConfig(n_temporal=2, m_spatial=(2,)))

    def test_unknown_parameter(self):
        with pytest.raises(ConfigurationError):
            build_fse_load("beta_2", np.zeros((2, 2)), None, fpde(), BasisConfig(n_temporal=2, m_spatial=(2,)))

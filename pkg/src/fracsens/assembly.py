r"""Petrov-Galerkin matrices and load tensors.

Matrices are indexed ``[test, trial]``. On the standard interval, with
``psi_n`` and ``Psi_k`` the temporal trial and test functions and ``phi_m``,
``Phi_r`` their spatial counterparts:

* ``S_T[k, n] = (D^{a/2} psi_n, D_right^{a/2} Psi_k)``, equal to ``(D^a psi_n, Psi_k)``
* ``M_T[k, n] = (psi_n, Psi_k)``
* ``K[r, m]`` sums ``(D^{b/2} phi_m, D_right^{b/2} Phi_r)`` and its mirror over the active sides
* ``M[r, m] = (phi_m, Phi_r)`` in closed form
* ``L_T`` and ``L_X`` hold the Log-Pow counterparts of ``S_T`` and ``K`` with full orders

The coefficient tensor ``U[n, m_1, .., m_d]`` solves

.. math::

    U \times_0 S_T \prod_j \times_j M_j
    + \sum_j U \times_0 M_T \times_j S_j \prod_{l \ne j} \times_l M_l
    + \gamma\, U \times_0 M_T \prod_j \times_j M_j = F ,

where ``S_j = s k_j K_j`` with ``s = -1`` for the FPDE and ``+1`` for the FBVP.
Affine scaling to physical intervals multiplies every order-``sigma``
operator by ``(2/L)^sigma`` and every inner product by ``L/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .fields import FabricatedField, SeparableFunction
from .fracops import (
    Side,
    _levels_for,
    digamma_coeff,
    frac_deriv_basis_spatial,
    frac_deriv_basis_temporal,
    logpow_basis_spatial,
    logpow_basis_temporal,
)
from .model import ModelParams, ProblemKind, parse_param
from .specfun import (
    BasisConfig,
    GradedMesh,
    affine_map,
    gauss_rule,
    graded_rule_01,
    jacobi_table,
    legendre_table,
    spatial_test_scale,
    spatial_trial_scale,
)

__all__ = [
    "ModelParams",
    "ProblemKind",
    "OperatorSet",
    "Discretization",
    "resolve_tau",
    "assemble",
    "build_temporal_matrices",
    "build_spatial_matrices",
    "build_load",
    "build_fse_load",
    "mode_apply",
]

# Grading depth of 1-D rules used for loads and norms.
LOAD_LEVELS = 24


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Assembled system blocks; temporal blocks are ``None`` without a time axis."""

    s_temporal: np.ndarray | None
    m_temporal: np.ndarray | None
    s_spatial: tuple = ()
    m_spatial: tuple = ()
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "s_spatial", tuple(self.s_spatial))
        object.__setattr__(self, "m_spatial", tuple(self.m_spatial))
        if (self.s_temporal is None) != (self.m_temporal is None):
            raise ConfigurationError("temporal blocks must be given together")
        if len(self.s_spatial) != len(self.m_spatial):
            raise ConfigurationError("spatial block lists differ in length")
        if self.s_temporal is None and not self.s_spatial:
            raise ConfigurationError("operator set has no blocks")
        for m in self.matrices():
            if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.all(np.isfinite(m)):
                raise ConfigurationError("blocks must be finite square matrices")
            m.setflags(write=False)
        for s, m in zip(self.s_spatial, self.m_spatial):
            if s.shape != m.shape:
                raise ConfigurationError("spatial stiffness and mass shapes differ")
        if self.s_temporal is not None and self.s_temporal.shape != self.m_temporal.shape:
            raise ConfigurationError("temporal stiffness and mass shapes differ")

    @property
    def has_time(self) -> bool:
        return self.s_temporal is not None

    @property
    def shape(self) -> tuple[int, ...]:
        head = (self.s_temporal.shape[0],) if self.has_time else ()
        return head + tuple(m.shape[0] for m in self.m_spatial)

    def matrices(self) -> list[np.ndarray]:
        out = [self.s_temporal, self.m_temporal] if self.has_time else []
        return out + list(self.s_spatial) + list(self.m_spatial)

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        """Action of the system operator on a coefficient tensor."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape != self.shape:
            raise ConfigurationError(f"tensor shape {coeffs.shape} != {self.shape}")
        t0 = 1 if self.has_time else 0
        masses = ([self.m_temporal] if self.has_time else []) + list(self.m_spatial)
        out = np.zeros_like(coeffs, dtype=np.result_type(coeffs, float))
        if self.has_time:
            out += mode_apply(coeffs, [self.s_temporal] + list(self.m_spatial))
        for j, s in enumerate(self.s_spatial):
            mats = list(masses)
            mats[t0 + j] = s
            out += mode_apply(coeffs, mats)
        if self.gamma:
            out += self.gamma * mode_apply(coeffs, masses)
        return out


def mode_apply(tensor: np.ndarray, mats: Sequence[np.ndarray | None]) -> np.ndarray:
    """Multiply axis ``a`` of ``tensor`` by ``mats[a]`` (``None`` skips an axis)."""
    out = tensor
    for axis, m in enumerate(mats):
        if m is None:
            continue
        out = np.moveaxis(np.tensordot(m, out, axes=([1], [axis])), 0, axis)
    return out


@dataclass(frozen=True, eq=False)
class Discretization:
    """System blocks plus the raw pieces needed by sensitivity loads.

    ``st``, ``mt`` and ``lt`` are the scaled temporal stiffness, mass and
    Log-Pow matrices; ``kx``, ``lx`` and ``mx`` hold, per dimension, the
    scaled stiffness summed over active sides (without ``k_j``), its Log-Pow
    counterpart and the mass matrix.
    """

    params: ModelParams
    cfg: BasisConfig
    tau: float | None
    ops: OperatorSet
    st: np.ndarray | None
    mt: np.ndarray | None
    lt: np.ndarray | None
    kx: tuple
    lx: tuple
    mx: tuple


def resolve_tau(params: ModelParams, cfg: BasisConfig) -> float | None:
    """Temporal basis exponent: configured value, else half the temporal order."""
    if not params.kind.has_time:
        return None
    return cfg.tau if cfg.tau is not None else 0.5 * params.alpha


def _check_shapes(params: ModelParams, cfg: BasisConfig) -> None:
    if params.kind.has_space and len(cfg.m_spatial) != params.dims:
        raise ConfigurationError(
            f"basis has {len(cfg.m_spatial)} spatial mode counts for {params.dims} dimensions")
    if not params.kind.has_space and cfg.m_spatial:
        raise ConfigurationError("fivp takes no spatial modes")


def _graded_pm1(levels: int, mesh: GradedMesh, left: bool = True, right: bool = True):
    """Graded rule on [-1, 1] with exact gaps ``1 + x`` and ``1 - x``."""
    x01, w01, c01 = graded_rule_01(GradedMesh(mesh.ratio, levels, mesh.points), left=left,
                                   right=right, with_complement=True)
    return 2.0 * x01 - 1.0, 2.0 * w01, 2.0 * x01, 2.0 * c01


# ---------------------------------------------------------------------------
# temporal blocks


def _temporal_tables(n_modes: int, tau: float, order: float, eta: np.ndarray, side: Side):
    return np.array([frac_deriv_basis_temporal(n, tau, order, eta, side)
                     for n in range(1, n_modes + 1)])


def _temporal_standard(n_modes: int, tau: float, alpha: float, npts: int):
    """Unscaled temporal stiffness and mass on [-1, 1]."""
    mu = 0.5 * alpha
    # D^mu psi_n ~ (1+eta)^(tau-mu) poly, right D^mu Psi_k ~ (1-eta)^(tau-mu) poly
    rule = gauss_rule("gauss-jacobi", npts, tau - mu, tau - mu)
    x = rule.nodes
    w = rule.weights
    left = _temporal_tables(n_modes, tau, mu, x, Side.LEFT) / np.power(1 + x, tau - mu)
    right = _temporal_tables(n_modes, tau, mu, x, Side.RIGHT) / np.power(1 - x, tau - mu)
    st = (right * w) @ left.T
    rule = gauss_rule("gauss-jacobi", npts, tau, tau)
    x, w = rule.nodes, rule.weights
    psi = jacobi_table(-tau, tau, n_modes - 1, x)
    test = jacobi_table(tau, -tau, n_modes - 1, x)
    mt = (test * w) @ psi.T
    return st, mt


def _temporal_logpow_standard(n_modes: int, tau: float, alpha: float, mesh: GradedMesh):
    """Unscaled ``(LP D^alpha psi_n, Psi_k)`` on [-1, 1]."""
    levels = _levels_for(min(tau - alpha, 0.0), mesh.levels) + 2
    x, w, plus, minus = _graded_pm1(levels, mesh)
    lp = np.array([logpow_basis_temporal(n, tau, alpha, x, Side.LEFT, gap=plus)
                   for n in range(1, n_modes + 1)])
    test = np.power(minus, tau) * jacobi_table(tau, -tau, n_modes - 1, x)
    return (test * w) @ lp.T


def build_temporal_matrices(params: ModelParams, cfg: BasisConfig):
    """Scaled temporal stiffness ``S_T`` and mass ``M_T``."""
    d = assemble(params, cfg)
    if d.st is None:
        raise ConfigurationError("problem has no time axis")
    return d.st, d.mt


# ---------------------------------------------------------------------------
# spatial blocks


def spatial_mass(m_modes: int, length: float = 2.0) -> np.ndarray:
    """Closed-form spatial mass matrix ``(phi_m, Phi_r)`` scaled by ``length/2``."""
    out = np.zeros((m_modes, m_modes))
    for r in range(1, m_modes + 1):
        for m in range(1, m_modes + 1):
            if r == m:
                v = 2.0 / (2 * m + 3) + 2.0 / (2 * m - 1)
            elif r == m + 2:
                v = -2.0 / (2 * m + 3)
            elif r == m - 2:
                v = -2.0 / (2 * m - 1)
            else:
                continue
            out[r - 1, m - 1] = spatial_trial_scale(m) * spatial_test_scale(r) * v
    return 0.5 * length * out


def _spatial_tables(m_modes: int, order: float, side: Side, xi: np.ndarray, test: bool):
    return np.array([frac_deriv_basis_spatial(m, order, side, xi, test)
                     for m in range(1, m_modes + 1)])


def spatial_stiffness_standard(m_modes: int, beta: float, side: Side, npts: int) -> np.ndarray:
    """Unscaled one-sided stiffness ``(D_side^{b/2} phi_m, D_other^{b/2} Phi_r)``."""
    mu = 0.5 * beta
    rule = gauss_rule("gauss-jacobi", npts, 1.0 - mu, 1.0 - mu)
    x, w = rule.nodes, rule.weights
    other = Side.RIGHT if side is Side.LEFT else Side.LEFT
    trial = _spatial_tables(m_modes, mu, side, x, False)
    test = _spatial_tables(m_modes, mu, other, x, True)
    weight = np.power(1 - x, 1 - mu) * np.power(1 + x, 1 - mu)
    return (test * (w / weight)) @ trial.T


def spatial_logpow_standard(m_modes: int, beta: float, side: Side, mesh: GradedMesh) -> np.ndarray:
    """Unscaled ``(LP D_side^b phi_m, Phi_r)`` on [-1, 1]."""
    levels = _levels_for(1.0 - beta, mesh.levels) + 2
    x, w, plus, minus = _graded_pm1(levels, mesh, left=side is Side.LEFT,
                                    right=side is Side.RIGHT)
    gap = plus if side is Side.LEFT else minus
    lp = np.array([logpow_basis_spatial(m, beta, side, x, gap=gap)
                   for m in range(1, m_modes + 1)])
    tab = legendre_table(m_modes + 1, x)
    test = np.array([spatial_test_scale(r) * (tab[r + 1] - tab[r - 1])
                     for r in range(1, m_modes + 1)])
    return (test * w) @ lp.T


def build_spatial_matrices(params: ModelParams, cfg: BasisConfig, j: int):
    """Scaled total spatial stiffness ``S_j`` (sign and ``k_j`` included) and mass ``M_j``."""
    d = assemble(params, cfg)
    if not 0 <= j < len(d.mx):
        raise ConfigurationError(f"dimension index {j} out of range")
    return d.ops.s_spatial[j], d.ops.m_spatial[j]


# ---------------------------------------------------------------------------
# assembly entry point


@lru_cache(maxsize=32)
def assemble(params: ModelParams, cfg: BasisConfig) -> Discretization:
    """Assemble every block for ``params`` at resolution ``cfg``.

    Results are cached, so repeated calls with equal arguments return the very
    same :class:`Discretization` (and :class:`OperatorSet`) object.
    """
    _check_shapes(params, cfg)
    tau = resolve_tau(params, cfg)
    npts = cfg.quad_points
    st = mt = lt = None
    if params.kind.has_time:
        alpha, T = params.alpha, params.time_horizon
        st0, mt0 = _temporal_standard(cfg.n_temporal, tau, alpha, npts)
        lt0 = _temporal_logpow_standard(cfg.n_temporal, tau, alpha, cfg.mesh)
        half = 0.5 * T
        scale = (2.0 / T) ** alpha
        st = half * scale * st0
        mt = half * mt0
        lt = half * scale * (lt0 + math.log(half) * st0)
    kx, lx, mx = [], [], []
    for j in range(params.dims if params.kind.has_space else 0):
        beta = params.betas[j]
        a, b = params.space_bounds[j]
        half = 0.5 * (b - a)
        scale = (1.0 / half) ** beta
        m_modes = cfg.m_spatial[j]
        k0 = np.zeros((m_modes, m_modes))
        l0 = np.zeros((m_modes, m_modes))
        for side in params.side_list:
            ks = spatial_stiffness_standard(m_modes, beta, side, npts)
            k0 += ks
            l0 += spatial_logpow_standard(m_modes, beta, side, cfg.mesh) + math.log(half) * ks
        kx.append(half * scale * k0)
        lx.append(half * scale * l0)
        mx.append(spatial_mass(m_modes, b - a))
    sign = params.spatial_sign
    ops = OperatorSet(
        st, mt,
        tuple(sign * k * K for k, K in zip(params.coeffs, kx)),
        tuple(mx),
        params.gamma,
    )
    return Discretization(params, cfg, tau, ops, st, mt, lt, tuple(kx), tuple(lx), tuple(mx))


def operator_set(params: ModelParams, cfg: BasisConfig) -> OperatorSet:
    return assemble(params, cfg).ops


# ---------------------------------------------------------------------------
# loads


def _axis_test_functions(params: ModelParams, cfg: BasisConfig):
    """Per-axis ``(lo, hi, count, evaluator)`` of the test functions."""
    tau = resolve_tau(params, cfg)
    out = []
    if params.kind.has_time:
        T = params.time_horizon

        def time_tests(t, n=cfg.n_temporal):
            eta = np.clip(affine_map(t, 0.0, T), -1.0, 1.0)
            return np.power(1 - eta, tau) * jacobi_table(tau, -tau, n - 1, eta)

        out.append((0.0, T, cfg.n_temporal, time_tests))
    if params.kind.has_space:
        for (a, b), m_modes in zip(params.space_bounds, cfg.m_spatial):
            def space_tests(x, a=a, b=b, m_modes=m_modes):
                xi = np.clip(affine_map(x, a, b), -1.0, 1.0)
                tab = legendre_table(m_modes + 1, xi)
                return np.array([spatial_test_scale(r) * (tab[r + 1] - tab[r - 1])
                                 for r in range(1, m_modes + 1)])

            out.append((a, b, m_modes, space_tests))
    return out


def axis_rule(lo: float, hi: float, mesh: GradedMesh, levels: int = LOAD_LEVELS):
    """Composite rule on ``[lo, hi]`` graded toward both ends.

    Nodes that round onto an endpoint are dropped; their weights are far
    below double precision relative to the interval.
    """
    x01, w01, c01 = graded_rule_01(GradedMesh(mesh.ratio, max(levels, mesh.levels), mesh.points),
                                   left=True, right=True, with_complement=True)
    y = np.where(x01 < 0.5, lo + (hi - lo) * x01, hi - (hi - lo) * c01)
    keep = (y > lo) & (y < hi)
    return y[keep], (hi - lo) * w01[keep]


def build_load(f, params: ModelParams, cfg: BasisConfig) -> np.ndarray:
    """Load tensor ``F[k, r_1, ..] = (f, Psi_k prod_j Phi_rj)`` over the physical domain.

    ``f`` may be a :class:`SeparableFunction` (moments are taken axis by
    axis on graded rules), a callable of the physical coordinates (tensor
    product of graded rules), or ``None`` for zero.
    """
    _check_shapes(params, cfg)
    axes = _axis_test_functions(params, cfg)
    shape = tuple(n for _, _, n, _ in axes)
    if f is None:
        return np.zeros(shape)
    if isinstance(f, FabricatedField):
        raise ConfigurationError("pass field.forcing(q) or a callable, not the field itself")
    if isinstance(f, SeparableFunction):
        if f.naxes != len(axes):
            raise ConfigurationError("separable load has the wrong number of axes")
        if not f.terms:
            return np.zeros(shape)
        functionals = []
        for lo, hi, _, tests in axes:
            y, w = axis_rule(lo, hi, cfg.mesh)
            tv = tests(y) * w

            functionals.append(lambda fn, y=y, tv=tv: tv @ np.asarray(fn(y), dtype=float))
        return f.moments(functionals)
    return _load_by_tensor_quadrature(f, params, cfg, axes, shape)


def _load_by_tensor_quadrature(f: Callable, params, cfg, axes, shape) -> np.ndarray:
    # graded toward both ends so endpoint powers in f or the test functions are resolved;
    # shallower grading in higher dimensions keeps the tensor grid affordable
    levels = 10 if len(axes) <= 2 else 5
    mesh = GradedMesh(cfg.mesh.ratio, levels, max(10, cfg.quad_points))
    points, vecs = [], []
    for lo, hi, _, tests in axes:
        y, w = axis_rule(lo, hi, mesh, levels)
        points.append(y)
        vecs.append(tests(y) * w)
    grids = np.meshgrid(*points, indexing="ij")
    values = np.asarray(f(*grids), dtype=float)
    if values.shape != grids[0].shape:
        values = np.broadcast_to(values, grids[0].shape)
    if not np.all(np.isfinite(values)):
        raise DomainError("load function is not finite on the quadrature grid")
    return mode_apply(values, vecs)


def build_fse_load(which: str, u_field, f_sens, params: ModelParams, cfg: BasisConfig) -> np.ndarray:
    """Right-hand side of the sensitivity equation for parameter ``which``.

    ``u_field`` is either the coefficient tensor of the discrete solution or
    a :class:`FabricatedField` used as an analytic solution. ``f_sens`` is
    the derivative of the forcing in the same parameter (``None`` for a fixed
    forcing). The load is ``(f_sens - (d/dq L) u, test)``.
    """
    if u_field is None:
        raise ConfigurationError("sensitivity load needs the forward field")
    if which not in params.param_names():
        raise ConfigurationError(f"{which!r} is not a parameter of this {params.kind.value} problem")
    load = build_load(f_sens, params, cfg)
    if isinstance(u_field, FabricatedField):
        return load - build_load(u_field.operator_derivative(params, which), params, cfg)
    disc = assemble(params, cfg)
    coeffs = np.asarray(u_field, dtype=float)
    if coeffs.shape != disc.ops.shape:
        raise ConfigurationError(f"coefficient shape {coeffs.shape} != {disc.ops.shape}")
    return load - operator_derivative_action(disc, which, coeffs)


def operator_derivative_action(disc: Discretization, which: str, coeffs: np.ndarray) -> np.ndarray:
    """Weak form of ``(d/dq L) u`` for a discrete ``u``."""
    params = disc.params
    kind, j = parse_param(which)
    t0 = 1 if params.kind.has_time else 0
    masses = ([disc.mt] if params.kind.has_time else []) + list(disc.mx)
    mats = list(masses)
    if kind == "alpha":
        a1 = digamma_coeff(1, params.alpha)
        mats[0] = a1 * disc.st - disc.lt
        return mode_apply(coeffs, mats)
    weight = params.spatial_sign
    if kind == "beta":
        a2 = digamma_coeff(2, params.betas[j])
        weight *= params.coeffs[j]
        mats[t0 + j] = a2 * disc.kx[j] - disc.lx[j]
    else:
        mats[t0 + j] = disc.kx[j]
    return weight * mode_apply(coeffs, mats)


def with_frozen_tau(params: ModelParams, cfg: BasisConfig) -> BasisConfig:
    """Configuration whose temporal exponent is pinned at its current value."""
    tau = resolve_tau(params, cfg)
    return cfg if tau is None or cfg.tau is not None else replace(cfg, tau=tau)

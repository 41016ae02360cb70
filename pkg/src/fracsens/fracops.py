r"""Fractional operators: Riemann-Liouville, Caputo and Log-Pow.

Left-sided operators act from the lower terminal ``a``, right-sided ones from
the upper terminal ``b``. For an order :math:`\sigma` with
:math:`n - 1 < \sigma < n` the Log-Pow operator is

.. math::

    {}^{LP}D^\sigma u(x) = \frac{1}{\Gamma(n-\sigma)} \frac{d^n}{dx^n}
        \int_a^x \log(x-s) (x-s)^{n-\sigma-1} u(s)\, ds ,

which satisfies :math:`\partial_\sigma D^\sigma u = \psi(n-\sigma) D^\sigma u -
{}^{LP}D^\sigma u` for fixed ``u``. Numerical evaluation always goes through
the Caputo rewrite plus boundary terms, so singular integrals are never
differentiated numerically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import digamma, gamma, rgamma

from .errors import AccuracyError, ConfigurationError, DomainError, SingularityError
from .specfun import (DEFAULT_MESH, GradedMesh, graded_rule_01, jacobi_table,
                      spatial_test_scale, spatial_trial_scale)

# Complex-step size for parameter derivatives of closed forms.
_CSTEP = 1e-30


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


def as_side(side) -> Side:
    try:
        return Side(side.value if isinstance(side, Side) else side)
    except ValueError:
        raise ConfigurationError(f"unknown side {side!r}") from None


@dataclass(frozen=True)
class FracOrder:
    """Fractional order ``sigma`` with ``n = ceil(sigma)``.

    Orders in [0, 2) are accepted except the integer 1.
    """

    sigma: float

    def __post_init__(self):
        s = float(self.sigma)
        if not (0.0 <= s < 2.0) or s == 1.0:
            raise DomainError(f"order must lie in [0, 1) or (1, 2), got {s}")
        object.__setattr__(self, "sigma", s)

    @property
    def n(self) -> int:
        return math.ceil(self.sigma)


def as_order(sigma) -> FracOrder:
    return sigma if isinstance(sigma, FracOrder) else FracOrder(sigma)


@dataclass(frozen=True)
class SampledFunction:
    """A function on ``domain`` with optional first and second derivatives.

    Evaluators must accept numpy arrays. Complex-valued evaluators are allowed.
    """

    domain: tuple[float, float]
    f: Callable
    df: Optional[Callable] = None
    d2f: Optional[Callable] = None

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise DomainError("domain must satisfy lo < hi")

    def derivative(self, k: int) -> Callable:
        fn = (self.f, self.df, self.d2f)[k]
        if fn is None:
            raise ConfigurationError(f"derivative of order {k} was not supplied")
        return fn

    def reflected(self) -> "SampledFunction":
        """The function ``y -> u(-y)`` on ``(-hi, -lo)``."""
        lo, hi = self.domain
        f, df, d2f = self.f, self.df, self.d2f
        return SampledFunction(
            (-hi, -lo),
            lambda y: f(-np.asarray(y)),
            None if df is None else (lambda y: -df(-np.asarray(y))),
            None if d2f is None else (lambda y: d2f(-np.asarray(y))),
        )

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        return _combine(self, other, 1.0, 1.0)

    def scaled(self, c) -> "SampledFunction":
        return _combine(self, self, c, 0.0)


def _combine(u: SampledFunction, v: SampledFunction, cu, cv) -> SampledFunction:
    if tuple(u.domain) != tuple(v.domain):
        raise DomainError("functions live on different domains")

    def lin(fu, fv):
        if fu is None or fv is None:
            return None
        return lambda y: cu * fu(y) + cv * fv(y)

    return SampledFunction(u.domain, lin(u.f, v.f), lin(u.df, v.df), lin(u.d2f, v.d2f))


def _rgamma_psi(z):
    """``psi(z) / Gamma(z)``, finite at the poles ``z = 0, -1, -2, ...``."""
    z = np.asarray(z)
    zr = np.real(z)
    pole = (np.imag(z) == 0) & (zr <= 0) & (zr == np.round(zr))
    safe = np.where(pole, 0.5, z)
    out = digamma(safe) * rgamma(safe)
    if np.any(pole):
        k = np.where(pole, -zr, 0).astype(int)
        limit = np.array([(-1.0) ** (kk + 1) * math.factorial(kk) for kk in np.ravel(k)])
        out = np.where(pole, limit.reshape(np.shape(k)), out)
    return out


def _distance(point, origin, side: Side) -> np.ndarray:
    d = np.asarray(point, dtype=float) - origin
    if side is Side.RIGHT:
        d = -d
    if np.any(d < 0):
        raise DomainError("evaluation point lies on the wrong side of the terminal")
    return d


def _power_check(p, sigma: FracOrder, d, coef) -> None:
    if np.real(p) <= -1:
        raise DomainError(f"power must exceed -1, got {p}")
    if np.any(d == 0) and np.real(p) - sigma.sigma < 0 and np.any(coef != 0):
        raise SingularityError("fractional derivative is infinite at the terminal")


def rl_frac_deriv_power(p, sigma, side, point, origin):
    r"""Riemann-Liouville derivative of a shifted power.

    Left: :math:`D^\sigma (x-a)^p = \Gamma(p+1)/\Gamma(p+1-\sigma) (x-a)^{p-\sigma}`,
    right: the mirror image with :math:`(b-x)`.
    """
    sigma, side = as_order(sigma), as_side(side)
    d = _distance(point, origin, side)
    coef = gamma(p + 1) * rgamma(p + 1 - sigma.sigma)
    _power_check(p, sigma, d, coef)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = coef * np.power(d, p - sigma.sigma)
    return out[()] if np.ndim(out) == 0 else out


def logpow_deriv_power(p, sigma, side, point, origin):
    r"""Log-Pow derivative of a shifted power.

    .. math::

        {}^{LP}D^\sigma (x-a)^p = \frac{\Gamma(p+1)}{\Gamma(p+1-\sigma)} (x-a)^{p-\sigma}
            \left[\psi(n-\sigma) - \psi(p+1-\sigma) + \log(x-a)\right]
    """
    sigma, side = as_order(sigma), as_side(side)
    d = _distance(point, origin, side)
    s = sigma.sigma
    coef = gamma(p + 1) * rgamma(p + 1 - s)
    _power_check(p, sigma, d, coef)
    g = gamma(p + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = np.power(d, p - s)
        logd = np.where(d > 0, np.log(np.where(d > 0, d, 1.0)), 0.0)
        out = dp * (coef * (digamma(sigma.n - s) + logd) - g * _rgamma_psi(p + 1 - s))
    return out[()] if np.ndim(out) == 0 else out


def power_order_dp(p, sigma, side, point, origin):
    r"""Derivative in the power ``p`` of :func:`rl_frac_deriv_power`."""
    sigma, side = as_order(sigma), as_side(side)
    d = _distance(point, origin, side)
    s = sigma.sigma
    coef = gamma(p + 1) * rgamma(p + 1 - s)
    _power_check(p, sigma, d, coef)
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = np.power(d, p - s)
        logd = np.where(d > 0, np.log(np.where(d > 0, d, 1.0)), 0.0)
        out = dp * (coef * (digamma(p + 1) + logd) - gamma(p + 1) * _rgamma_psi(p + 1 - s))
    return out[()] if np.ndim(out) == 0 else out


def digamma_coeff(n: int, sigma: float) -> float:
    r"""Order-derivative weight :math:`\Gamma(n-\sigma)\,\partial_\sigma [1/\Gamma(n-\sigma)] = \psi(n-\sigma)`."""
    z = n - sigma
    if z <= 0:
        raise DomainError(f"digamma weight needs n - sigma > 0, got {z}")
    return float(digamma(z))


# ---------------------------------------------------------------------------
# quadrature


def _levels_for(exponent: float, base: int) -> int:
    # geometric panels of ratio 0.15 shrink an endpoint contribution by
    # 0.15**(levels*(exponent+1)); 20/(exponent+1) levels reach double precision
    lift = exponent + 1.0
    if lift <= 0:
        raise DomainError("integrand is not integrable at the graded end")
    return int(min(400, max(base, math.ceil(20.0 / min(lift, 1.0)))))


def kernel_integral(g: Callable, x, lo: float, exponent: float, log_power: int = 0,
                    mesh: GradedMesh = DEFAULT_MESH, tol: float = 1e-10,
                    end_exponent: float = 0.0):
    r"""Evaluate :math:`\int_{lo}^{x} (x-s)^{e} \log^k(x-s)\, g(s)\, ds` for each ``x``.

    Composite Gauss rules on panels graded toward both ends of ``[lo, x]``.
    The result from a second, coarser rule serves as the error estimate.

    Parameters
    ----------
    g : callable
        Vectorized integrand factor, possibly complex.
    exponent, log_power
        Kernel power ``e`` and log power ``k`` (0 or 1).
    end_exponent
        Known power behaviour of ``g`` near ``lo`` (0 for smooth ``g``).
    tol
        Relative tolerance for the error estimate.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    length = x - lo
    if np.any(length < 0):
        raise DomainError("integration point below the lower terminal")
    kernel_levels = _levels_for(exponent, mesh.levels) + 2 * log_power
    end_levels = _levels_for(min(end_exponent, 0.0), mesh.levels)
    levels = max(kernel_levels, end_levels)

    def rule(lv, pts):
        w01, wt, c01 = graded_rule_01(GradedMesh(mesh.ratio, lv, pts), left=True, right=True,
                                      with_complement=True)
        L = length[:, None]
        w = L * w01[None, :]
        # measure nodes from whichever end is closer to keep precision there
        s = np.where(w01[None, :] < 0.5, x[:, None] - w, lo + L * c01[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = np.power(w, exponent)
            if log_power:
                kern = kern * np.log(w) ** log_power
        vals = kern * g(s)
        return (vals * wt[None, :]).sum(axis=1) * length

    fine = rule(levels, mesh.points)
    coarse = rule(max(levels - 2, 1), max(mesh.points - 4, 4))
    err = np.abs(fine - coarse)
    scale = np.maximum(1.0, np.abs(fine))
    zero = length == 0
    fine = np.where(zero, 0.0, fine)
    if np.any((err > tol * scale) & ~zero):
        raise AccuracyError(f"quadrature error estimate {err.max():.3e} exceeds tolerance")
    return fine


def _reflect_call(fn, u: SampledFunction, sigma, side, point, **kw):
    if side is Side.RIGHT:
        return fn(u.reflected(), sigma, Side.LEFT, -np.asarray(point, dtype=float), **kw)
    return None


def rl_frac_deriv_quadrature(u: SampledFunction, sigma, side=Side.LEFT, point=0.0,
                             mesh: GradedMesh = DEFAULT_MESH, tol: float = 1e-10,
                             end_exponent: float = 0.0):
    r"""Riemann-Liouville derivative of ``u`` by the Caputo rewrite.

    For :math:`0<\sigma<1`:
    :math:`D^\sigma u = u(a)(x-a)^{-\sigma}/\Gamma(1-\sigma) + \frac{1}{\Gamma(1-\sigma)}\int_a^x (x-s)^{-\sigma} u'(s) ds`.
    For :math:`1<\sigma<2` the term :math:`u'(a)(x-a)^{1-\sigma}/\Gamma(2-\sigma)` is added
    and the integral carries :math:`u''`.
    ``end_exponent`` is the power behaviour of the relevant derivative of ``u``
    near the terminal, used only to pick the grading depth.
    """
    sigma, side = as_order(sigma), as_side(side)
    if side is Side.RIGHT:
        return _reflect_call(rl_frac_deriv_quadrature, u, sigma, side, point,
                             mesh=mesh, tol=tol, end_exponent=end_exponent)
    s, n = sigma.sigma, sigma.n
    a = u.domain[0]
    x = np.asarray(point, dtype=float)
    if np.any(x > u.domain[1]):
        raise DomainError("evaluation point outside the function domain")
    if s == 0.0:
        return u.f(x)
    d = _distance(x, a, Side.LEFT)
    if np.any(d == 0):
        raise SingularityError("evaluation at the terminal")
    out = u.f(np.asarray(a)) * d ** (-s) * rgamma(1 - s)
    if n == 2:
        out = out + u.derivative(1)(np.asarray(a)) * d ** (1 - s) * rgamma(2 - s)
    integral = kernel_integral(u.derivative(n), x, a, n - s - 1, 0, mesh, tol, end_exponent)
    out = out + rgamma(n - s) * integral.reshape(np.shape(x))
    return out[()] if np.ndim(out) == 0 else out


def caputo_frac_deriv_quadrature(u: SampledFunction, sigma, side=Side.LEFT, point=0.0,
                                 mesh: GradedMesh = DEFAULT_MESH, tol: float = 1e-10,
                                 end_exponent: float = 0.0):
    """Caputo derivative of ``u`` (the integral part of the rewrite alone)."""
    sigma, side = as_order(sigma), as_side(side)
    if side is Side.RIGHT:
        return _reflect_call(caputo_frac_deriv_quadrature, u, sigma, side, point,
                             mesh=mesh, tol=tol, end_exponent=end_exponent)
    s, n = sigma.sigma, sigma.n
    x = np.asarray(point, dtype=float)
    integral = kernel_integral(u.derivative(n), x, u.domain[0], n - s - 1, 0, mesh, tol,
                               end_exponent)
    out = rgamma(n - s) * integral.reshape(np.shape(x))
    return out[()] if np.ndim(out) == 0 else out


def caputo_logpow_quadrature(u: SampledFunction, sigma, side=Side.LEFT, point=0.0,
                             mesh: GradedMesh = DEFAULT_MESH, tol: float = 1e-10,
                             end_exponent: float = 0.0):
    r"""Caputo-type Log-Pow operator :math:`\frac{1}{\Gamma(n-\sigma)}\int \log(x-s)(x-s)^{n-\sigma-1} u^{(n)}(s) ds`."""
    sigma, side = as_order(sigma), as_side(side)
    if side is Side.RIGHT:
        return _reflect_call(caputo_logpow_quadrature, u, sigma, side, point,
                             mesh=mesh, tol=tol, end_exponent=end_exponent)
    s, n = sigma.sigma, sigma.n
    x = np.asarray(point, dtype=float)
    integral = kernel_integral(u.derivative(n), x, u.domain[0], n - s - 1, 1, mesh, tol,
                               end_exponent)
    out = rgamma(n - s) * integral.reshape(np.shape(x))
    return out[()] if np.ndim(out) == 0 else out


def logpow_deriv_quadrature(u: SampledFunction, sigma, side=Side.LEFT, point=0.0,
                            mesh: GradedMesh = DEFAULT_MESH, tol: float = 1e-10,
                            end_exponent: float = 0.0):
    r"""Riemann-Liouville Log-Pow derivative of ``u``.

    Boundary terms plus the Caputo-type Log-Pow integral. With
    :math:`\ell = \log(x-a)` and :math:`d = x-a`:

    * :math:`0<\sigma<1`: :math:`u(a)\,\ell\, d^{-\sigma}/\Gamma(1-\sigma)`
    * :math:`1<\sigma<2`: :math:`u(a)(1+(1-\sigma)\ell) d^{-\sigma}/\Gamma(2-\sigma)
      + u'(a)\,\ell\, d^{1-\sigma}/\Gamma(2-\sigma)`
    """
    sigma, side = as_order(sigma), as_side(side)
    if side is Side.RIGHT:
        return _reflect_call(logpow_deriv_quadrature, u, sigma, side, point,
                             mesh=mesh, tol=tol, end_exponent=end_exponent)
    s, n = sigma.sigma, sigma.n
    a = u.domain[0]
    x = np.asarray(point, dtype=float)
    d = _distance(x, a, Side.LEFT)
    if np.any(d == 0):
        raise SingularityError("evaluation at the terminal")
    ell = np.log(d)
    ua = u.f(np.asarray(a))
    if n == 1:
        bound = ua * ell * d ** (-s) * rgamma(1 - s)
    else:
        dua = u.derivative(1)(np.asarray(a))
        bound = (ua * (1 + (1 - s) * ell) * d ** (-s) + dua * ell * d ** (1 - s)) * rgamma(2 - s)
    out = bound + caputo_logpow_quadrature(u, sigma, Side.LEFT, x, mesh, tol, end_exponent)
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# basis functions on the standard interval


def _jacobi_weighted_deriv(j: int, a, b, mu, x, side: Side, gap=None):
    r"""Fractional derivative of :math:`(1\pm x)^{b} P_j^{(a,b)}` type products.

    Left: :math:`D^\mu[(1+x)^b P_j^{(a,b)}] = \frac{\Gamma(j+b+1)}{\Gamma(j+b+1-\mu)}
    (1+x)^{b-\mu} P_j^{(a+\mu,b-\mu)}`. Right: the same with the roles of
    ``a`` and ``b`` exchanged and :math:`(1-x)^a`; here ``b`` names the
    exponent of the weight in both cases. ``gap`` optionally supplies the
    distance to the differentiating end (``1+x`` or ``1-x``) to full precision.
    """
    x = np.asarray(x, dtype=float)
    coef = gamma(j + b + 1) * rgamma(j + b + 1 - mu)
    if gap is None:
        gap = 1.0 + x if side is Side.LEFT else 1.0 - x
    if side is Side.LEFT:
        return coef * np.power(gap, b - mu) * jacobi_table(a + mu, b - mu, j, x)[j]
    return coef * np.power(gap, b - mu) * jacobi_table(b - mu, a + mu, j, x)[j]


def frac_deriv_basis_temporal(n: int, tau: float, order, eta, side=Side.LEFT, gap=None):
    r"""Fractional derivative of a temporal basis function on [-1, 1].

    ``side=LEFT`` differentiates the trial function
    :math:`(1+\eta)^\tau P_{n-1}^{(-\tau,\tau)}` from -1; ``side=RIGHT``
    differentiates the test function :math:`(1-\eta)^\tau P_{n-1}^{(\tau,-\tau)}`
    from +1. Both reduce to a weighted Jacobi polynomial of degree ``n-1``,
    which is a plain polynomial when ``order == tau``. ``gap`` is the
    optional exact distance from ``eta`` to the differentiating end.
    """
    side = as_side(side)
    if n < 1:
        raise DomainError("index must be >= 1")
    mu = order if np.iscomplexobj(order) else as_order(order).sigma
    return _jacobi_weighted_deriv(n - 1, -tau, tau, mu, eta, side, gap)


def _legendre_diff_parts(m: int, side: Side):
    # P_{m+1} - P_{m-1} = (1+x)[P_m^{(0,1)} - P_{m-1}^{(0,1)}]
    #                   = -(1-x)[P_m^{(1,0)} + P_{m-1}^{(1,0)}]
    if side is Side.LEFT:
        return ((m, 1.0), (m - 1, -1.0))
    return ((m, -1.0), (m - 1, -1.0))


def frac_deriv_legendre_difference(m: int, order, side, xi, gap=None):
    """Fractional derivative of ``P_{m+1} - P_{m-1}`` from the chosen end of [-1, 1]."""
    side = as_side(side)
    if m < 1:
        raise DomainError("index must be >= 1")
    mu = order if np.iscomplexobj(order) else as_order(order).sigma
    out = 0.0
    for j, c in _legendre_diff_parts(m, side):
        out = out + c * _jacobi_weighted_deriv(j, 0.0, 1.0, mu, xi, side, gap)
    return out


def frac_deriv_basis_spatial(m: int, order, side, xi, test: bool = False, gap=None):
    """Fractional derivative of the spatial trial (or test) function of index ``m``."""
    scale = spatial_test_scale(m) if test else spatial_trial_scale(m)
    return scale * frac_deriv_legendre_difference(m, order, side, xi, gap)


def _logpow_from_order_derivative(deriv: Callable, order):
    """Log-Pow value from ``A_n D^sigma - d/dsigma D^sigma`` using a complex step."""
    sig = as_order(order)
    base = deriv(sig.sigma)
    dsig = np.imag(deriv(sig.sigma + 1j * _CSTEP)) / _CSTEP
    return digamma_coeff(sig.n, sig.sigma) * base - dsig


def logpow_basis_temporal(n: int, tau: float, order, eta, side=Side.LEFT, gap=None):
    """Log-Pow derivative of a temporal basis function on [-1, 1]."""
    side = as_side(side)
    eta = np.asarray(eta, dtype=float)
    return _logpow_from_order_derivative(
        lambda mu: frac_deriv_basis_temporal(n, tau, mu, eta, side, gap), order)


def logpow_basis_spatial(m: int, order, side, xi, test: bool = False, gap=None):
    """Log-Pow derivative of the spatial trial (or test) function of index ``m``."""
    side = as_side(side)
    xi = np.asarray(xi, dtype=float)
    return _logpow_from_order_derivative(
        lambda mu: frac_deriv_basis_spatial(m, mu, side, xi, test, gap), order)

r"""Orthogonal polynomials, poly-fractonomial bases, quadrature and affine maps.

All polynomial families are evaluated with three-term recurrences, which stay
stable to high degree. The Jacobi evaluator accepts complex parameters so that
derivatives with respect to the parameters can be taken by complex-step
differentiation elsewhere in the package.

Trial and test bases on the standard interval :math:`[-1, 1]`:

* temporal trial  :math:`\psi_n(\eta) = (1+\eta)^\tau P_{n-1}^{(-\tau,\tau)}(\eta)`
* temporal test   :math:`\Psi_k(\eta) = (1-\eta)^\tau P_{k-1}^{(\tau,-\tau)}(\eta)`
* spatial trial   :math:`\phi_m = s_m (P_{m+1} - P_{m-1})`, :math:`s_m = 2 + (-1)^m`
* spatial test    :math:`\Phi_r = \tilde s_r (P_{r+1} - P_{r-1})`,
  :math:`\tilde s_r = 2 (-1)^r + 1`

The temporal families carry unit normalization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConfigurationError, DomainError

_EDGE_TOL = 1e-14


def _as_points(x, check: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if check and np.any(np.abs(x) > 1.0 + _EDGE_TOL):
        raise DomainError("evaluation point outside [-1, 1]")
    return x


def _maybe_scalar(value: np.ndarray, like):
    return value[()] if np.ndim(like) == 0 else value


# ---------------------------------------------------------------------------
# polynomial families


def legendre_table(nmax: int, x) -> np.ndarray:
    """Legendre polynomials ``P_0 .. P_nmax`` at ``x``, stacked on axis 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def legendre_eval(n: int, x):
    """Evaluate the Legendre polynomial of degree ``n`` at ``x`` in [-1, 1]."""
    if n < 0:
        raise DomainError("degree must be nonnegative")
    x = _as_points(x)
    return _maybe_scalar(legendre_table(n, x)[n], x)


def jacobi_table(a, b, nmax: int, x) -> np.ndarray:
    r"""Jacobi polynomials :math:`P_0^{(a,b)} .. P_{nmax}^{(a,b)}` at ``x``.

    ``a`` and ``b`` may be complex; the result dtype follows them. No checks
    are made on the parameters, so callers own the admissibility test.
    """
    x = np.asarray(x, dtype=float)
    dtype = np.result_type(x, np.asarray(a), np.asarray(b), float)
    out = np.empty((nmax + 1,) + x.shape, dtype=dtype)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 0.5 * ((a + b + 2) * x + (a - b))
    ab = a + b
    ab2 = a * a - b * b
    for n in range(1, nmax):
        c = 2 * n + ab
        denom = 2 * (n + 1) * (n + ab + 1) * c
        out[n + 1] = (
            (c + 1) * ((c + 2) * c * x + ab2) * out[n]
            - 2 * (n + a) * (n + b) * (c + 2) * out[n - 1]
        ) / denom
    return out


def jacobi_eval(a: float, b: float, n: int, x):
    """Evaluate the Jacobi polynomial of degree ``n`` with parameters ``(a, b)``."""
    if np.real(a) <= -1 or np.real(b) <= -1:
        raise DomainError(f"Jacobi parameters must exceed -1, got ({a}, {b})")
    if n < 0:
        raise DomainError("degree must be nonnegative")
    x = _as_points(x)
    return _maybe_scalar(jacobi_table(a, b, n, x)[n], x)


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")


def polyfrac_first(n: int, tau: float, eta):
    """First-kind poly-fractonomial (temporal trial function); zero at -1."""
    if n < 1:
        raise DomainError("index must be >= 1")
    _check_tau(tau)
    eta = _as_points(eta)
    vals = np.power(1.0 + eta, tau) * jacobi_table(-tau, tau, n - 1, eta)[n - 1]
    return _maybe_scalar(vals, eta)


def polyfrac_second(k: int, tau: float, eta):
    """Second-kind poly-fractonomial (temporal test function); zero at +1."""
    if k < 1:
        raise DomainError("index must be >= 1")
    _check_tau(tau)
    eta = _as_points(eta)
    vals = np.power(1.0 - eta, tau) * jacobi_table(tau, -tau, k - 1, eta)[k - 1]
    return _maybe_scalar(vals, eta)


def spatial_trial_scale(m: int) -> float:
    """Normalization of the spatial trial function of index ``m``."""
    return 2.0 + (-1.0) ** m


def spatial_test_scale(r: int) -> float:
    """Normalization of the spatial test function of index ``r``."""
    return 2.0 * (-1.0) ** r + 1.0


def _legendre_difference(m: int, x: np.ndarray) -> np.ndarray:
    tab = legendre_table(m + 1, x)
    return tab[m + 1] - tab[m - 1]


def spatial_basis(m: int, xi):
    """Spatial trial function; vanishes at both ends of [-1, 1]."""
    if m < 1:
        raise DomainError("index must be >= 1")
    xi = _as_points(xi)
    return _maybe_scalar(spatial_trial_scale(m) * _legendre_difference(m, xi), xi)


def spatial_test(r: int, xi):
    """Spatial test function; vanishes at both ends of [-1, 1]."""
    if r < 1:
        raise DomainError("index must be >= 1")
    xi = _as_points(xi)
    return _maybe_scalar(spatial_test_scale(r) * _legendre_difference(r, xi), xi)


# ---------------------------------------------------------------------------
# quadrature


class QuadKind(enum.Enum):
    GAUSS_LEGENDRE = "gauss-legendre"
    GAUSS_JACOBI = "gauss-jacobi"
    GAUSS_LOG_SINGULAR = "gauss-log-singular"


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights on [-1, 1].

    For ``GAUSS_JACOBI`` the weight function ``(1-x)^a (1+x)^b`` is absorbed
    into ``weights``; ``params`` then holds ``(a, b)``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: QuadKind
    params: tuple = ()

    def integrate(self, values) -> float:
        """Weighted sum of ``values``, or of ``values(nodes)`` when given a callable."""
        if callable(values):
            values = values(self.nodes)
        return float(np.dot(self.weights, values))

    def mapped(self, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights transplanted to ``[lo, hi]``."""
        half = 0.5 * (hi - lo)
        return lo + half * (self.nodes + 1.0), half * self.weights


@dataclass(frozen=True)
class GradedMesh:
    """Geometric panel grading used by the log-singular rule.

    Panels shrink by ``ratio`` toward each graded end, ``levels`` times, and
    each panel carries ``points`` Gauss-Legendre nodes.
    """

    ratio: float = 0.15
    levels: int = 12
    points: int = 20

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ConfigurationError("grading ratio must lie in (0, 1)")
        if self.levels < 0 or self.points < 1:
            raise ConfigurationError("levels must be >= 0 and points >= 1")


DEFAULT_MESH = GradedMesh()


def graded_breakpoints(levels: int, ratio: float, left: bool, right: bool) -> np.ndarray:
    """Panel breakpoints on [0, 1] with geometric refinement at chosen ends."""
    if left and right:
        half = graded_breakpoints(levels, ratio, True, False) * 0.5
        return np.concatenate([half, 1.0 - half[::-1][1:]])
    inner = ratio ** np.arange(levels, 0, -1)
    pts = np.concatenate([[0.0], inner, [1.0]])
    if right and not left:
        pts = 1.0 - pts[::-1]
    elif not left:
        pts = np.array([0.0, 1.0])
    return pts


def _left_graded(levels: int, ratio: float, points: int):
    x, w = roots_legendre(points)
    bp = graded_breakpoints(levels, ratio, True, False)
    lo, hi = bp[:-1, None], bp[1:, None]
    nodes = (lo + 0.5 * (hi - lo) * (x + 1.0)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return nodes, weights, 1.0 - nodes


@lru_cache(maxsize=64)
def _graded_01(levels: int, ratio: float, points: int, left: bool, right: bool):
    n, w, c = _left_graded(levels, ratio, points)
    if left and right:
        nodes = np.concatenate([0.5 * n, 1.0 - 0.5 * n[::-1]])
        comp = np.concatenate([1.0 - 0.5 * n, 0.5 * n[::-1]])
        weights = np.concatenate([0.5 * w, 0.5 * w[::-1]])
    elif right:
        nodes, weights, comp = c[::-1], w[::-1], n[::-1]
    elif left:
        nodes, weights, comp = n, w, c
    else:
        x, wl = roots_legendre(points)
        nodes, weights = 0.5 * (x + 1.0), 0.5 * wl
        comp = 1.0 - nodes
    out = tuple(np.ascontiguousarray(a) for a in (nodes, weights, comp))
    for a in out:
        a.setflags(write=False)
    return out


def graded_rule_01(mesh: GradedMesh = DEFAULT_MESH, left: bool = True, right: bool = False,
                   levels: int | None = None, with_complement: bool = False):
    """Composite Gauss-Legendre nodes and weights on [0, 1] graded toward the ends.

    With ``with_complement`` the distances ``1 - nodes`` are returned as a
    third array, computed without cancellation near the right end.
    """
    lv = mesh.levels if levels is None else levels
    nodes, weights, comp = _graded_01(int(lv), float(mesh.ratio), int(mesh.points),
                                      bool(left), bool(right))
    return (nodes, weights, comp) if with_complement else (nodes, weights)


@lru_cache(maxsize=256)
def _cached_rule(kind: QuadKind, n: int, a: float, b: float):
    if kind is QuadKind.GAUSS_LEGENDRE:
        x, w = roots_legendre(n)
    elif kind is QuadKind.GAUSS_JACOBI:
        x, w = roots_jacobi(n, a, b)
    else:
        mesh = GradedMesh(points=n)
        x01, w01 = graded_rule_01(mesh, left=True)
        x, w = 2.0 * x01 - 1.0, 2.0 * w01
    x = np.array(x, dtype=float)
    w = np.array(w, dtype=float)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule(kind: QuadKind | str, n: int, a: float = 0.0, b: float = 0.0) -> QuadratureRule:
    """Build a quadrature rule on [-1, 1].

    Parameters
    ----------
    kind
        One of :class:`QuadKind` (or its string value).
    n
        Number of nodes. For the log-singular kind this is the number of Gauss
        points per panel of the default graded mesh (graded toward -1).
    a, b
        Jacobi weight exponents, used only by ``GAUSS_JACOBI``.
    """
    try:
        kind = QuadKind(kind)
    except ValueError:
        raise ConfigurationError(f"unsupported quadrature kind {kind!r}") from None
    if n < 1:
        raise DomainError("number of nodes must be >= 1")
    if kind is QuadKind.GAUSS_JACOBI and (a <= -1 or b <= -1):
        raise DomainError("Jacobi weight exponents must exceed -1")
    x, w = _cached_rule(kind, int(n), float(a), float(b))
    params = (float(a), float(b)) if kind is QuadKind.GAUSS_JACOBI else ()
    return QuadratureRule(x, w, kind, params)


# ---------------------------------------------------------------------------
# affine maps


def affine_map(y, lo: float, hi: float):
    """Map ``y`` in ``[lo, hi]`` to the standard interval [-1, 1]."""
    if not lo < hi:
        raise DomainError(f"need lo < hi, got ({lo}, {hi})")
    return 2.0 * (np.asarray(y, dtype=float) - lo) / (hi - lo) - 1.0


def inverse_affine_map(eta, lo: float, hi: float):
    """Map ``eta`` in [-1, 1] back to ``[lo, hi]``."""
    if not lo < hi:
        raise DomainError(f"need lo < hi, got ({lo}, {hi})")
    return lo + 0.5 * (hi - lo) * (np.asarray(eta, dtype=float) + 1.0)


# ---------------------------------------------------------------------------
# resolution


@dataclass(frozen=True)
class BasisConfig:
    """Spectral resolution.

    Parameters
    ----------
    n_temporal
        Number of temporal modes.
    m_spatial
        Number of spatial modes per dimension.
    tau
        Exponent of the temporal poly-fractonomials; ``None`` couples it to
        half the temporal order at assembly time.
    quad_extra
        Extra quadrature points beyond the largest mode count.
    mesh
        Graded mesh used for singular integrals.
    """

    n_temporal: int = 1
    m_spatial: Sequence[int] = field(default_factory=tuple)
    tau: float | None = None
    quad_extra: int = 10
    mesh: GradedMesh = DEFAULT_MESH

    def __post_init__(self):
        object.__setattr__(self, "m_spatial", tuple(int(m) for m in self.m_spatial))
        if self.n_temporal < 1 or any(m < 1 for m in self.m_spatial):
            raise ConfigurationError("all mode counts must be >= 1")
        if self.tau is not None and not 0.0 < self.tau < 1.0:
            raise ConfigurationError(f"tau must lie in (0, 1), got {self.tau}")
        if self.quad_extra < 0:
            raise ConfigurationError("quad_extra must be nonnegative")

    @property
    def quad_points(self) -> int:
        return max((self.n_temporal,) + self.m_spatial) + self.quad_extra

"""Separable functions and fabricated power-law fields.

A fabricated field is a finite sum of terms
``c * prod_a (y_a - lo_a)^(e_a + g_a * order_a)`` where axis ``a`` runs over
time (order ``alpha``) and the spatial dimensions (orders ``beta_j``). Because
every factor is a shifted power, the operator applied to the field, its
parameter derivatives, and the Log-Pow terms all have closed forms for
left-sided derivatives; right-sided derivatives of left-anchored powers are
evaluated by quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .fracops import (
    SampledFunction,
    Side,
    digamma_coeff,
    as_order,
    logpow_deriv_power,
    logpow_deriv_quadrature,
    power_order_dp,
    rl_frac_deriv_power,
    rl_frac_deriv_quadrature,
)
from .model import ModelParams, parse_param

_CSTEP = 1e-30


@dataclass(frozen=True, eq=False)
class SeparableFunction:
    """Sum of products of one-dimensional factors, one factor per axis."""

    naxes: int
    terms: tuple = ()

    def __post_init__(self):
        terms = tuple((float(c), tuple(fs)) for c, fs in self.terms)
        if any(len(fs) != self.naxes for _, fs in terms):
            raise ConfigurationError("every term needs one factor per axis")
        object.__setattr__(self, "terms", terms)

    def __call__(self, *coords):
        if len(coords) != self.naxes:
            raise ConfigurationError(f"expected {self.naxes} coordinates")
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        out = np.zeros(coords[0].shape) if coords else 0.0
        for c, fs in self.terms:
            prod = c
            for f, y in zip(fs, coords):
                prod = prod * f(y)
            out = out + prod
        return out

    def on_grid(self, *axis_points) -> np.ndarray:
        """Values on the tensor grid spanned by the 1-D point sets."""
        shape = tuple(len(p) for p in axis_points)
        out = np.zeros(shape)
        for c, fs in self.terms:
            vals = [np.asarray(f(np.asarray(p, dtype=float)), dtype=float) for f, p in zip(fs, axis_points)]
            out += c * _outer(vals)
        return out

    def moments(self, axis_vectors: Sequence[Callable[[Callable], np.ndarray]]) -> np.ndarray:
        """Tensor of ``sum_i c_i prod_a M_a(f_ia)`` for linear 1-D functionals ``M_a``."""
        out = None
        for c, fs in self.terms:
            term = c * _outer([m(f) for m, f in zip(axis_vectors, fs)])
            out = term if out is None else out + term
        return out

    def __add__(self, other: "SeparableFunction") -> "SeparableFunction":
        if other.naxes != self.naxes:
            raise ConfigurationError("axis count mismatch")
        return SeparableFunction(self.naxes, self.terms + other.terms)

    def __mul__(self, c: float) -> "SeparableFunction":
        return SeparableFunction(self.naxes, tuple((c * k, fs) for k, fs in self.terms))

    __rmul__ = __mul__

    def __neg__(self) -> "SeparableFunction":
        return self * -1.0

    def __sub__(self, other: "SeparableFunction") -> "SeparableFunction":
        return self + (-other)


def _outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.asarray(vectors[0])
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


# ---------------------------------------------------------------------------
# one-dimensional power factors


def _power_fn(e: float, lo: float, log: bool = False) -> Callable:
    def f(y):
        d = np.asarray(y, dtype=float) - lo
        v = np.power(d, e)
        if log:
            with np.errstate(divide="ignore", invalid="ignore"):
                v = np.where(d > 0, v * np.log(np.where(d > 0, d, 1.0)), 0.0)
        return v

    return f


def _sampled_power(e, lo: float, hi: float) -> SampledFunction:
    return SampledFunction(
        (lo, hi),
        lambda y: np.power(np.asarray(y) - lo, e),
        lambda y: e * np.power(np.asarray(y) - lo, e - 1),
        lambda y: e * (e - 1) * np.power(np.asarray(y) - lo, e - 2),
    )


def _op_fn(e: float, order: float, sides, lo: float, hi: float, mode: str) -> Callable:
    """Fractional operator applied to ``(y - lo)^e``, summed over ``sides``.

    ``mode``: ``"d"`` the derivative itself, ``"dp"`` its derivative in ``e``,
    ``"lp"`` the Log-Pow derivative, ``"ds"`` the derivative in the order
    with the function held fixed.
    """
    sig = as_order(order)

    def left(y):
        if mode == "d":
            return rl_frac_deriv_power(e, sig, Side.LEFT, y, lo)
        if mode == "dp":
            return power_order_dp(e, sig, Side.LEFT, y, lo)
        lp = logpow_deriv_power(e, sig, Side.LEFT, y, lo)
        if mode == "lp":
            return lp
        return digamma_coeff(sig.n, sig.sigma) * rl_frac_deriv_power(e, sig, Side.LEFT, y, lo) - lp

    def right(y):
        if mode == "d":
            return rl_frac_deriv_quadrature(_sampled_power(e, lo, hi), sig, Side.RIGHT, y)
        if mode == "dp":
            v = rl_frac_deriv_quadrature(_sampled_power(e + 1j * _CSTEP, lo, hi), sig, Side.RIGHT, y)
            return np.imag(v) / _CSTEP
        lp = logpow_deriv_quadrature(_sampled_power(e, lo, hi), sig, Side.RIGHT, y)
        if mode == "lp":
            return lp
        d = rl_frac_deriv_quadrature(_sampled_power(e, lo, hi), sig, Side.RIGHT, y)
        return digamma_coeff(sig.n, sig.sigma) * d - lp

    parts = [left if s is Side.LEFT else right for s in sides]

    def f(y):
        y = np.asarray(y, dtype=float)
        return sum(np.real(p(y)) for p in parts)

    return f


# ---------------------------------------------------------------------------
# fabricated fields


@dataclass(frozen=True)
class PowerTerm:
    """``coef * prod_a (y_a - lo_a)^(base_a + gain_a * order_a)``."""

    coef: float
    exponents: tuple

    def __post_init__(self):
        object.__setattr__(self, "coef", float(self.coef))
        object.__setattr__(
            self, "exponents", tuple((float(b), float(g)) for b, g in self.exponents))


@dataclass(frozen=True)
class FabricatedField:
    """Manufactured field built from :class:`PowerTerm` objects.

    Axes follow :meth:`ModelParams.axes` (time first when present).
    """

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            return
        n = len(self.terms[0].exponents)
        if any(len(t.exponents) != n for t in self.terms):
            raise ConfigurationError("all terms need the same number of axes")

    @property
    def naxes(self) -> int:
        return len(self.terms[0].exponents) if self.terms else 0

    def _check(self, q: ModelParams) -> None:
        if self.terms and self.naxes != len(q.axes()):
            raise ConfigurationError(
                f"field has {self.naxes} axes but the problem has {len(q.axes())}")

    def _exps(self, term: PowerTerm, q: ModelParams) -> list[float]:
        return [b + g * o for (b, g), o in zip(term.exponents, q.axis_orders())]

    def frozen_at(self, q: ModelParams) -> "FabricatedField":
        """Copy with exponents fixed at the orders of ``q``."""
        self._check(q)
        return FabricatedField(tuple(
            PowerTerm(t.coef, tuple((e, 0.0) for e in self._exps(t, q))) for t in self.terms))

    def as_separable(self, q: ModelParams) -> SeparableFunction:
        self._check(q)
        axes = q.axes()
        terms = []
        for t in self.terms:
            fs = [_power_fn(e, lo) for e, (lo, _) in zip(self._exps(t, q), axes)]
            terms.append((t.coef, fs))
        return SeparableFunction(len(axes), tuple(terms))

    def __call__(self, q: ModelParams, *coords):
        return self.as_separable(q)(*coords)

    def _axis_of(self, q: ModelParams, name: str) -> int | None:
        kind, j = parse_param(name)
        if kind == "k":
            return None
        if kind == "alpha":
            if not q.kind.has_time:
                raise ConfigurationError("alpha is not a parameter of this problem")
            return 0
        return j + (1 if q.kind.has_time else 0)

    def param_derivative(self, q: ModelParams, name: str) -> SeparableFunction:
        """Derivative of the field in parameter ``name`` through its exponents."""
        self._check(q)
        axes = q.axes()
        ax = self._axis_of(q, name)
        terms = []
        if ax is not None:
            for t in self.terms:
                gain = t.exponents[ax][1]
                if gain == 0.0:
                    continue
                fs = [_power_fn(e, lo, log=(a == ax))
                      for a, (e, (lo, _)) in enumerate(zip(self._exps(t, q), axes))]
                terms.append((t.coef * gain, fs))
        return SeparableFunction(len(axes), tuple(terms))

    def _operator_terms(self, q: ModelParams, coef: float, exps, log_axis: int | None,
                        modes: dict) -> list:
        """Terms of the operator applied to one power product.

        ``modes`` maps an axis index to the operator mode used for the
        operator term acting on that axis (default ``"d"``); an entry
        ``{"only": a}`` restricts output to the operator acting on axis ``a``.
        """
        axes, orders = q.axes(), q.axis_orders()
        t0 = 1 if q.kind.has_time else 0
        out = []
        only = modes.get("only")
        for a in range(len(axes)):
            if only is not None and a != only:
                continue
            if a < t0:
                weight, sides = 1.0, (Side.LEFT,)
            else:
                weight, sides = q.spatial_sign * q.coeffs[a - t0], q.side_list
            if modes.get("weight") == "unit":
                weight = 1.0 if a < t0 else q.spatial_sign
            mode = modes.get(a, "d")
            if log_axis == a:
                mode = "dp"
            fs = []
            for b, (e, (lo, hi)) in enumerate(zip(exps, axes)):
                if b == a:
                    fs.append(_op_fn(e, orders[a], sides, lo, hi, mode))
                else:
                    fs.append(_power_fn(e, lo, log=(b == log_axis)))
            out.append((coef * weight, fs))
        return out

    def forcing(self, q: ModelParams) -> SeparableFunction:
        """The operator of ``q`` applied to the field (exponents at ``q``)."""
        self._check(q)
        terms = []
        for t in self.terms:
            terms += self._operator_terms(q, t.coef, self._exps(t, q), None, {})
        if q.gamma:
            terms += [(q.gamma * c, fs) for c, fs in self.as_separable(q).terms]
        return SeparableFunction(len(q.axes()), tuple(terms))

    def operator_derivative(self, q: ModelParams, name: str) -> SeparableFunction:
        """Parameter derivative of the operator applied to the fixed field."""
        self._check(q)
        ax = self._axis_of(q, name)
        kind, j = parse_param(name)
        terms = []
        for t in self.terms:
            exps = self._exps(t, q)
            if kind == "k":
                a = j + (1 if q.kind.has_time else 0)
                terms += self._operator_terms(q, t.coef, exps, None, {"only": a, "weight": "unit"})
            else:
                terms += self._operator_terms(q, t.coef, exps, None, {"only": ax, ax: "ds"})
        return SeparableFunction(len(q.axes()), tuple(terms))

    def forcing_derivative(self, q: ModelParams, name: str) -> SeparableFunction:
        """Total parameter derivative of :meth:`forcing`, exponents included."""
        total = self.operator_derivative(q, name)
        ax = self._axis_of(q, name)
        if ax is None:
            return total
        terms = []
        for t in self.terms:
            gain = t.exponents[ax][1]
            if gain == 0.0:
                continue
            terms += self._operator_terms(q, t.coef * gain, self._exps(t, q), ax, {})
        extra = SeparableFunction(len(q.axes()), tuple(terms))
        if q.gamma:
            extra = extra + q.gamma * self.param_derivative(q, name)
        return total + extra

    def logpow_terms(self, q: ModelParams, name: str) -> SeparableFunction:
        """Log-Pow operator of parameter ``name``'s axis applied to the field."""
        self._check(q)
        ax = self._axis_of(q, name)
        if ax is None:
            raise ConfigurationError("coefficients have no Log-Pow term")
        terms = []
        for t in self.terms:
            terms += self._operator_terms(q, t.coef, self._exps(t, q), None,
                                          {"only": ax, ax: "lp", "weight": "unit"})
        return SeparableFunction(len(q.axes()), tuple(terms))


# ---------------------------------------------------------------------------
# named cases


def _spatial_profile(gain: float) -> list[tuple[float, tuple]]:
    # (1+x)^(3 + g*beta) - 1/2 (1+x)^(4 + g*beta)
    return [(1.0, (3.0, gain)), (-0.5, (4.0, gain))]


def fivp_truth(alpha_true: float) -> FabricatedField:
    """``sin(5 pi a/2) t^(3 + a/2)`` with ``a`` the true order."""
    c = float(np.sin(2.5 * np.pi * alpha_true))
    return FabricatedField((PowerTerm(c, ((3.0 + 0.5 * alpha_true, 0.0),)),))


def fbvp_truth(beta_true: float) -> FabricatedField:
    """``(1+x)^(3 + b/2) - (1+x)^(4 + b/2) / 2`` with ``b`` the true order."""
    return FabricatedField(tuple(
        PowerTerm(c, ((e + 0.5 * beta_true, 0.0),)) for c, (e, _) in _spatial_profile(0.0)))


def fpde_case1() -> FabricatedField:
    """``t^(3 + alpha/2) X(x)`` with ``X = (1+x)^(3+beta/2) - (1+x)^(4+beta/2)/2``."""
    return FabricatedField(tuple(
        PowerTerm(c, ((3.0, 0.5), sp)) for c, sp in _spatial_profile(0.5)))


def fpde_case2() -> FabricatedField:
    """``t^(3 + alpha/2) (t - 0.4)(t - 0.9) X(x)``."""
    time_part = [(1.0, 5.0), (-1.3, 4.0), (0.36, 3.0)]
    return FabricatedField(tuple(
        PowerTerm(ct * cx, ((et, 0.5), sp)) for ct, et in time_part for cx, sp in _spatial_profile(0.5)))


def fpde_estimation_truth(alpha_true: float, beta_true: float) -> FabricatedField:
    """``t^(1 + a/2) X_b(x)`` frozen at the true orders ``(a, b)``."""
    return FabricatedField(tuple(
        PowerTerm(c, ((1.0 + 0.5 * alpha_true, 0.0), (e + 0.5 * beta_true, 0.0)))
        for c, (e, _) in _spatial_profile(0.0)))


def custom_field(spec: Sequence[dict]) -> FabricatedField:
    """Field from declarative term descriptors.

    Each descriptor holds ``coef`` and ``exponents``, a list with one
    ``[base, gain]`` pair per axis.
    """
    try:
        return FabricatedField(tuple(PowerTerm(d["coef"], tuple(tuple(p) for p in d["exponents"]))
                                     for d in spec))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed custom field: {exc}") from None

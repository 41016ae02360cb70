"""Estimating fractional orders by minimizing a model error.

Two error measures are available. Type I compares the discrete solution at
trial parameters with the known solution; its gradient comes from the
sensitivity fields. Type II compares the operator at trial parameters applied
to the known solution with the known forcing; it involves no discretization
and its gradient is analytic.

The search first shrinks the admissible box by repeated bisection (keeping
the sub-box whose best corner is lowest) and then marches along the
normalized negative gradient.
"""

from __future__ import annotations

import enum
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, StallError
from .fields import FabricatedField
from .model import ModelParams, param_bounds
from .sensitivity import solve_forward, solve_sensitivities
from .solver import QuadGrid, evaluate_grid, quadrature_grid
from .specfun import BasisConfig

log = logging.getLogger(__name__)

BOUNDARY_NUDGE = 1e-3
CLIP_MARGIN = 1e-6


class ErrorType(enum.Enum):
    TYPE_I = "type-i"
    TYPE_II = "type-ii"


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    DIVERGED = "diverged"
    STALLED = "stalled"


@dataclass(frozen=True, eq=False)
class ModelErrorSpec:
    """What is known and what is sought.

    Parameters
    ----------
    kind
        Error measure.
    truth
        Known solution, with exponents already fixed.
    forcing
        Known forcing ``f*``.
    template
        Parameters supplying geometry and every inactive value.
    active
        Names of the parameters being estimated.
    bounds
        Closed box ``Q`` for the active parameters.
    """

    kind: ErrorType
    truth: FabricatedField
    forcing: object
    template: ModelParams
    active: tuple
    bounds: tuple

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, ErrorType) else ErrorType(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "active", tuple(self.active))
        object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))
        if self.truth is None or self.forcing is None:
            raise ConfigurationError("model errors need both the solution and the forcing")
        if not self.active or len(self.bounds) != len(self.active):
            raise ConfigurationError("need one bound pair per active parameter")
        for name, (lo, hi) in zip(self.active, self.bounds):
            if name not in self.template.param_names():
                raise ConfigurationError(f"{name!r} is not a parameter of the model")
            plo, phi = param_bounds(name)
            if not (plo <= lo < hi <= phi):
                raise ConfigurationError(f"bounds for {name} must lie within [{plo}, {phi}]")

    @classmethod
    def fabricated(cls, kind, field_: FabricatedField, true_params: ModelParams,
                   active: Sequence[str], bounds=None) -> "ModelErrorSpec":
        """Spec whose forcing is generated from ``field_`` at the true parameters."""
        truth = field_.frozen_at(true_params)
        bounds = bounds or [param_bounds(n) for n in active]
        return cls(kind, truth, truth.forcing(true_params), true_params, tuple(active), tuple(bounds))

    def vector(self, q: ModelParams) -> np.ndarray:
        return np.array([q.get(n) for n in self.active])

    def params_at(self, values: Sequence[float]) -> ModelParams:
        q = self.template
        for name, v in zip(self.active, values):
            q = q.with_param(name, float(v))
        return q

    def clip(self, values: Sequence[float]) -> tuple[np.ndarray, bool]:
        lo = np.array([b[0] for b in self.bounds]) + CLIP_MARGIN
        hi = np.array([b[1] for b in self.bounds]) - CLIP_MARGIN
        v = np.asarray(values, dtype=float)
        out = np.clip(v, lo, hi)
        return out, bool(np.any(out != v))


# ---------------------------------------------------------------------------
# errors and gradients


def _grid(spec: ModelErrorSpec, grid: QuadGrid | None) -> QuadGrid:
    return grid or quadrature_grid(spec.template)


def _forcing_grid(spec: ModelErrorSpec, grid: QuadGrid) -> np.ndarray:
    f = spec.forcing
    if hasattr(f, "on_grid"):
        return f.on_grid(*grid.points)
    mesh = np.meshgrid(*grid.points, indexing="ij")
    return np.broadcast_to(np.asarray(f(*mesh), dtype=float), mesh[0].shape)


def _type2_residual(spec: ModelErrorSpec, q: ModelParams, grid: QuadGrid) -> np.ndarray:
    return spec.truth.forcing(q).on_grid(*grid.points) - _forcing_grid(spec, grid)


def _type1_residual(spec: ModelErrorSpec, q: ModelParams, cfg: BasisConfig, grid: QuadGrid):
    coeffs = solve_forward(q, cfg, spec.forcing)
    approx = evaluate_grid(coeffs, cfg, q, *grid.points)
    return coeffs, approx - spec.truth.as_separable(q).on_grid(*grid.points)


def model_error(spec: ModelErrorSpec, q: ModelParams, cfg: BasisConfig | None = None,
                grid: QuadGrid | None = None) -> float:
    """L2 model error at parameters ``q``."""
    grid = _grid(spec, grid)
    if spec.kind is ErrorType.TYPE_II:
        return grid.norm(_type2_residual(spec, q, grid))
    if cfg is None:
        raise ConfigurationError("type-I errors need a basis configuration")
    return grid.norm(_type1_residual(spec, q, cfg, grid)[1])


def model_error_gradient(spec: ModelErrorSpec, q: ModelParams, cfg: BasisConfig | None = None,
                         grid: QuadGrid | None = None, sens=None) -> np.ndarray:
    """Gradient of the model error in the active parameters.

    Returns zeros when the error vanishes (the minimum has been reached).
    For type I, precomputed sensitivity fields may be passed as ``sens``.
    """
    grid = _grid(spec, grid)
    if spec.kind is ErrorType.TYPE_II:
        res = _type2_residual(spec, q, grid)
        err = grid.norm(res)
        if err == 0.0:
            return np.zeros(len(spec.active))
        return np.array([
            grid.inner(res, spec.truth.operator_derivative(q, n).on_grid(*grid.points)) / err
            for n in spec.active])
    if cfg is None:
        raise ConfigurationError("type-I errors need a basis configuration")
    coeffs, res = _type1_residual(spec, q, cfg, grid)
    err = grid.norm(res)
    if err == 0.0:
        return np.zeros(len(spec.active))
    if sens is None:
        sens = solve_sensitivities(q, cfg, coeffs, requested=spec.active)
    return np.array([
        grid.inner(res, evaluate_grid(sens[n], cfg, q, *grid.points)) / err
        for n in spec.active])


# ---------------------------------------------------------------------------
# stage I: coarse grid


@dataclass(frozen=True, eq=False)
class SearchRegion:
    """Axis-aligned box in the active parameters with cached corner errors."""

    lo: tuple
    hi: tuple
    corner_values: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise DomainError("region needs lo < hi in every coordinate")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    def contains(self, point) -> bool:
        return all(a <= p <= b for a, p, b in zip(self.lo, point, self.hi))


def _nudged(point, bounds) -> tuple:
    out = []
    for v, (lo, hi) in zip(point, bounds):
        if v <= lo:
            v = lo + BOUNDARY_NUDGE * (hi - lo)
        elif v >= hi:
            v = hi - BOUNDARY_NUDGE * (hi - lo)
        out.append(v)
    return tuple(out)


def coarse_grid_search(spec: ModelErrorSpec | None, region0: SearchRegion, levels: int = 2,
                       cfg: BasisConfig | None = None,
                       error_fn: Callable[[Sequence[float]], float] | None = None,
                       bounds=None, min_diameter: float = 0.0,
                       workers: int = 1) -> SearchRegion:
    """Shrink ``region0`` by bisecting every axis up to ``levels`` times.

    At each level the error is evaluated at all corners of the ``2^p``
    sub-boxes (shared corners are evaluated once) and the sub-box whose
    lowest corner value is smallest is kept. Ties go to the sub-box with the
    smaller mean corner value, then to the lexicographically smallest lower
    corner. Corners on the boundary of the admissible box are nudged
    slightly inward before evaluation. The search also stops once the
    region diameter falls below ``min_diameter``. ``error_fn`` replaces the
    model error for synthetic use; ``workers > 1`` evaluates new corners of
    a level concurrently.
    """
    if levels < 1:
        raise DomainError("levels must be >= 1")
    if error_fn is None:
        if spec is None:
            raise ConfigurationError("need a model error spec or an error function")
        error_fn = lambda v: model_error(spec, spec.params_at(v), cfg)  # noqa: E731
    bounds = bounds or (spec.bounds if spec is not None else tuple(zip(region0.lo, region0.hi)))
    cache = dict(region0.corner_values)

    def evaluate(corner):
        val = float(error_fn(_nudged(corner, bounds)))
        log.info("stage I corner %s error %.6e", corner, val)
        return val

    lo, hi = np.array(region0.lo), np.array(region0.hi)
    pattern = list(itertools.product((0, 1), repeat=len(lo)))
    for _ in range(levels):
        if np.linalg.norm(hi - lo) < min_diameter:
            break
        mid = 0.5 * (lo + hi)
        subs = []
        for choice in pattern:
            sub_lo = np.where(np.array(choice) == 0, lo, mid)
            sub_hi = np.where(np.array(choice) == 0, mid, hi)
            corners = [tuple(float(v) for v in np.where(np.array(c) == 0, sub_lo, sub_hi))
                       for c in pattern]
            subs.append((sub_lo, sub_hi, corners))
        missing = sorted({c for _, _, cs in subs for c in cs} - set(cache))
        if workers > 1 and len(missing) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                cache.update(zip(missing, pool.map(evaluate, missing)))
        else:
            cache.update((c, evaluate(c)) for c in missing)
        best = None
        for sub_lo, sub_hi, corners in subs:
            vals = [cache[c] for c in corners]
            key = (min(vals), float(np.mean(vals)), tuple(sub_lo))
            if best is None or key < best[0]:
                best = (key, sub_lo, sub_hi)
        lo, hi = best[1], best[2]
    return SearchRegion(tuple(lo), tuple(hi), cache)


# ---------------------------------------------------------------------------
# stage II: descent


@dataclass(frozen=True)
class Iterate:
    """One row of the trace. ``direction``/``step`` describe the move that
    leaves this iterate; they are ``None`` on the final row."""

    q: tuple
    error: float
    gradient: tuple | None = None
    direction: tuple | None = None
    step: float | None = None
    clipped: bool = False
    note: str = ""


@dataclass(frozen=True, eq=False)
class EstimationTrace:
    active: tuple
    iterates: list
    status: Status
    region: SearchRegion | None = None

    @property
    def final(self) -> np.ndarray:
        return np.array(self.iterates[-1].q)

    @property
    def errors(self) -> list[float]:
        return [it.error for it in self.iterates]


@dataclass(frozen=True)
class StepResult:
    direction: np.ndarray
    step: float
    q_next: np.ndarray
    clipped: bool
    note: str = ""


def descent_step(q: Sequence[float], error: float, gradient: Sequence[float],
                 previous: StepResult | None = None,
                 previous_gradient: Sequence[float] | None = None,
                 rule: str = "taylor", spec: ModelErrorSpec | None = None,
                 tol: float = 0.0, previous_q: Sequence[float] | None = None) -> StepResult:
    """Next iterate along the normalized negative gradient.

    Step-length rules:

    ``"taylor"``
        ``s = E / |grad E|`` at every iteration, the root of the linear model
        of ``E`` along the direction.
    ``"recurrence"``
        Taylor for the first step, then the previous step rescaled by
        ``(g_prev . p_prev) / (g . p)``.
    ``"secant"``
        Taylor for the first step, then the secant estimate of the
        stationary point of ``E`` along the gradient,
        ``s = |g| (dq . dg) / (dg . dg)`` with ``dq``, ``dg`` the last
        changes in parameters and gradient.

    Whenever a rule yields a step that is not a positive finite number, the
    previous step is halved and the trace note says so.
    """
    g = np.asarray(gradient, dtype=float)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0 or not np.isfinite(gnorm):
        if error > tol:
            raise StallError("zero gradient away from the minimum")
        return StepResult(np.zeros_like(g), 0.0, np.asarray(q, dtype=float), False, "at minimum")
    p = -g / gnorm
    note = ""
    if rule not in ("taylor", "recurrence", "secant"):
        raise ConfigurationError(f"unknown step rule {rule!r}")
    if rule == "taylor" or previous is None:
        s = error / gnorm
    elif rule == "recurrence":
        gp = np.asarray(previous_gradient, dtype=float)
        s = previous.step * float(gp @ previous.direction) / float(g @ p)
    else:
        dq = np.asarray(q, dtype=float) - np.asarray(previous_q, dtype=float)
        dg = g - np.asarray(previous_gradient, dtype=float)
        denom = float(dg @ dg)
        s = gnorm * float(dq @ dg) / denom if denom > 0 else np.nan
    if not (np.isfinite(s) and s > 0):
        if previous is None:
            raise StallError("no usable step length")
        s = 0.5 * previous.step
        note = "step rule gave a non-positive length; halved previous step"
    proposal = np.asarray(q, dtype=float) + s * p
    clipped = False
    if spec is not None:
        proposal, clipped = spec.clip(proposal)
    return StepResult(p, float(s), proposal, clipped, note)


@dataclass(frozen=True)
class EstimateOptions:
    tol: float = 1e-6
    step_tol: float = 1e-6
    max_iter: int = 50
    rule: str = "taylor"
    levels: int = 2
    min_diameter: float = 0.0
    workers: int = 1
    divergence_factor: float = 1e6


def estimate(spec: ModelErrorSpec, q0: Sequence[float] | None = None,
             region0: SearchRegion | None = None, cfg: BasisConfig | None = None,
             options: EstimateOptions = EstimateOptions(),
             grid: QuadGrid | None = None) -> EstimationTrace:
    """Run the optional coarse search and then the descent loop.

    With ``region0`` the coarse search runs first; the descent starts from
    ``q0`` when given, otherwise from the centre of the final region. The
    loop stops when the error drops below ``options.tol`` (``CONVERGED``),
    when the step length drops below ``options.step_tol`` with the error
    still above tolerance (``STALLED``), when the error blows up
    (``DIVERGED``), or after ``options.max_iter`` steps (``MAX_ITER``).
    """
    grid = _grid(spec, grid)
    region = None
    if region0 is not None:
        region = coarse_grid_search(spec, region0, options.levels, cfg,
                                    min_diameter=options.min_diameter, workers=options.workers)
        start = region.center if q0 is None else q0
    elif q0 is not None:
        start = q0
    else:
        raise ConfigurationError("need an initial guess or a search region")
    q, clipped = spec.clip(np.asarray(start, dtype=float))
    rows: list[Iterate] = []
    prev_step: StepResult | None = None
    prev_grad = None
    prev_q = None
    status = Status.MAX_ITER
    err0 = None
    for i in range(options.max_iter + 1):
        params = spec.params_at(q)
        err = model_error(spec, params, cfg, grid)
        err0 = err if err0 is None else err0
        if not np.isfinite(err) or err > options.divergence_factor * max(err0, options.tol):
            rows.append(Iterate(tuple(q), err))
            status = Status.DIVERGED
            break
        if err < options.tol:
            rows.append(Iterate(tuple(q), err))
            status = Status.CONVERGED
            break
        if i == options.max_iter:
            rows.append(Iterate(tuple(q), err))
            break
        grad = model_error_gradient(spec, params, cfg, grid)
        step = descent_step(q, err, grad, prev_step, prev_grad, options.rule, spec, options.tol,
                            prev_q)
        rows.append(Iterate(tuple(q), err, tuple(grad), tuple(step.direction), step.step,
                            step.clipped, step.note))
        log.info("iter %d q=%s E=%.6e |grad|=%.3e step=%.3e", i,
                 np.array2string(q, precision=6), err, np.linalg.norm(grad), step.step)
        moved = float(np.linalg.norm(step.q_next - q))
        prev_step, prev_grad, prev_q = step, grad, q
        q = step.q_next
        if moved < options.step_tol:
            err = model_error(spec, spec.params_at(q), cfg, grid)
            rows.append(Iterate(tuple(q), err))
            status = Status.CONVERGED if err < options.tol else Status.STALLED
            break
    return EstimationTrace(spec.active, rows, status, region)

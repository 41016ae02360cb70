"""Forward solves and sensitivity fields.

Each sensitivity field solves the forward system with a different load, so a
single assembled operator serves all of them. The temporal basis exponent is
held fixed while differentiating, which is what a finite-difference check
must also do (see :func:`finite_difference_sensitivity`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .assembly import assemble, build_fse_load, build_load, with_frozen_tau
from .errors import ConfigurationError, DomainError
from .fields import FabricatedField
from .model import ModelParams, ProblemKind, param_bounds
from .solver import QuadGrid, evaluate_grid, quadrature_grid, solve
from .specfun import BasisConfig

__all__ = [
    "ProblemKind",
    "SensitivitySet",
    "solve_forward",
    "solve_sensitivities",
    "finite_difference_sensitivity",
]


@dataclass(frozen=True, eq=False)
class SensitivitySet:
    """Sensitivity coefficient tensors keyed by parameter name."""

    fields: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.fields[name]

    def __contains__(self, name: str) -> bool:
        return name in self.fields

    def names(self) -> list[str]:
        return list(self.fields)


def solve_forward(params: ModelParams, cfg: BasisConfig, f, method: str = "fast") -> np.ndarray:
    """Coefficient tensor of the discrete solution for forcing ``f``."""
    ops = assemble(params, cfg).ops
    return solve(ops, build_load(f, params, cfg), method)


def solve_sensitivities(params: ModelParams, cfg: BasisConfig, u_field,
                        f_sens_map: Mapping[str, object] | None = None,
                        requested: Iterable[str] | None = None,
                        method: str = "fast") -> SensitivitySet:
    """Sensitivity fields for the requested parameters.

    Parameters
    ----------
    u_field
        Coefficient tensor of the forward solution, or a fabricated field
        standing in for the exact solution.
    f_sens_map
        Forcing derivatives by parameter name; missing entries mean the
        forcing does not depend on that parameter.
    requested
        Parameter names; defaults to every parameter of the problem.
    """
    names = list(requested) if requested is not None else params.param_names()
    f_sens_map = dict(f_sens_map or {})
    unknown = set(names) - set(params.param_names())
    if unknown:
        raise ConfigurationError(f"not parameters of this problem: {sorted(unknown)}")
    ops = assemble(params, cfg).ops
    out = {}
    for name in names:
        load = build_fse_load(name, u_field, f_sens_map.get(name), params, cfg)
        out[name] = solve(ops, load, method)
    return SensitivitySet(out)


def finite_difference_sensitivity(params: ModelParams, cfg: BasisConfig,
                                  f_builder: Callable[[ModelParams], object],
                                  param_name: str, h: float,
                                  grid: QuadGrid | None = None,
                                  method: str = "fast") -> np.ndarray:
    """Central difference of forward solutions, sampled on a quadrature grid.

    ``f_builder`` returns the forcing for a given parameter set. The temporal
    basis exponent is frozen at its value for ``params``.
    """
    if not h > 0:
        raise DomainError("step must be positive")
    lo, hi = param_bounds(param_name)
    value = params.get(param_name)
    if not (lo < value - h and value + h < hi):
        raise DomainError(f"{param_name} +/- {h} leaves the admissible range ({lo}, {hi})")
    frozen = with_frozen_tau(params, cfg)
    grid = grid or quadrature_grid(params)
    fields = []
    for sign in (1.0, -1.0):
        q = params.with_param(param_name, value + sign * h)
        coeffs = solve_forward(q, frozen, f_builder(q), method)
        fields.append(evaluate_grid(coeffs, frozen, q, *grid.points))
    return (fields[0] - fields[1]) / (2.0 * h)


def case_forcing_builder(field_: FabricatedField) -> Callable[[ModelParams], object]:
    """Forcing as a function of parameters for a parameter-dependent fabricated field."""
    return field_.forcing


def case_forcing_derivatives(field_: FabricatedField, params: ModelParams,
                             names: Iterable[str] | None = None) -> dict:
    """Total forcing derivatives of a fabricated field, keyed by parameter."""
    names = params.param_names() if names is None else names
    return {n: field_.forcing_derivative(params, n) for n in names}

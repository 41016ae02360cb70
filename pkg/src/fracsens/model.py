"""Model parameters and problem kinds."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import ConfigurationError, DomainError
from .fracops import Side


class ProblemKind(enum.Enum):
    """Which operator is active.

    ``FIVP`` is a time-fractional initial value problem (only ``alpha``),
    ``FBVP`` a space-fractional boundary value problem (``beta_j``, ``k_j``),
    ``FPDE`` the full space-time equation.
    """

    FIVP = "fivp"
    FBVP = "fbvp"
    FPDE = "fpde"

    @property
    def has_time(self) -> bool:
        return self is not ProblemKind.FBVP

    @property
    def has_space(self) -> bool:
        return self is not ProblemKind.FIVP


_SIDES = {
    "both": (Side.LEFT, Side.RIGHT),
    "left": (Side.LEFT,),
    "right": (Side.RIGHT,),
}


@dataclass(frozen=True)
class ModelParams:
    """Parameter vector and geometry.

    The FPDE reads ``D_t^alpha u - sum_j k_j D_j^beta_j u + gamma u = f`` on
    ``(0, T] x prod_j (a_j, b_j)``, where ``D_j`` is the left, right or
    two-sided Riemann-Liouville derivative selected by ``sides``. The FIVP
    drops the spatial terms; the FBVP drops the time derivative and takes the
    opposite spatial sign, ``sum_j k_j D_j^beta_j u + gamma u = f``.

    Parameter names used throughout: ``alpha``, ``beta_1``, ``k_1``, ...
    """

    alpha: float | None = None
    betas: tuple = ()
    coeffs: tuple = ()
    time_horizon: float = 1.0
    space_bounds: tuple = ()
    kind: ProblemKind = ProblemKind.FPDE
    sides: str = "both"
    gamma: float = 0.0

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, ProblemKind) else ProblemKind(self.kind)
        object.__setattr__(self, "kind", kind)
        betas = tuple(float(b) for b in self.betas)
        d = len(betas)
        coeffs = tuple(float(k) for k in self.coeffs) or (1.0,) * d
        bounds = tuple((float(a), float(b)) for a, b in self.space_bounds) or ((-1.0, 1.0),) * d
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "space_bounds", bounds)
        if self.sides not in _SIDES:
            raise ConfigurationError(f"sides must be one of {sorted(_SIDES)}")
        if kind.has_time:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
            if not self.time_horizon > 0:
                raise DomainError("time horizon must be positive")
        if kind.has_space:
            if d == 0:
                raise ConfigurationError(f"{kind.value} needs at least one spatial dimension")
            if len(coeffs) != d or len(bounds) != d:
                raise ConfigurationError("betas, coeffs and space_bounds must have equal length")
            if any(not 1.0 < b < 2.0 for b in betas):
                raise DomainError(f"beta values must lie in (1, 2), got {betas}")
            if any(k < 0 for k in coeffs):
                raise DomainError("coefficients k_j must be nonnegative")
            if any(not a < b for a, b in bounds):
                raise DomainError("space bounds need a_j < b_j")
        elif d:
            raise ConfigurationError("fivp takes no spatial parameters")

    @property
    def dims(self) -> int:
        return len(self.betas)

    @property
    def side_list(self) -> tuple[Side, ...]:
        return _SIDES[self.sides]

    @property
    def spatial_sign(self) -> float:
        """Sign multiplying ``k_j D^beta_j`` in the operator."""
        return 1.0 if self.kind is ProblemKind.FBVP else -1.0

    def axes(self) -> list[tuple[float, float]]:
        """Physical intervals of every axis, time first when present."""
        out = [(0.0, float(self.time_horizon))] if self.kind.has_time else []
        return out + list(self.space_bounds)

    def axis_orders(self) -> list[float]:
        out = [self.alpha] if self.kind.has_time else []
        return out + list(self.betas)

    def param_names(self) -> list[str]:
        names = ["alpha"] if self.kind.has_time else []
        for j in range(1, self.dims + 1):
            names.append(f"beta_{j}")
        for j in range(1, self.dims + 1):
            names.append(f"k_{j}")
        return names

    def get(self, name: str) -> float:
        kind, j = parse_param(name)
        if kind == "alpha":
            if not self.kind.has_time:
                raise ConfigurationError("alpha is not a parameter of this problem")
            return float(self.alpha)
        self._check_index(j)
        return (self.betas if kind == "beta" else self.coeffs)[j]

    def with_param(self, name: str, value: float) -> "ModelParams":
        kind, j = parse_param(name)
        if kind == "alpha":
            return replace(self, alpha=float(value))
        self._check_index(j)
        seq = list(self.betas if kind == "beta" else self.coeffs)
        seq[j] = float(value)
        key = "betas" if kind == "beta" else "coeffs"
        return replace(self, **{key: tuple(seq)})

    def _check_index(self, j: int) -> None:
        if not 0 <= j < self.dims:
            raise ConfigurationError(f"dimension index {j + 1} out of range")


def parse_param(name: str) -> tuple[str, int]:
    """Split ``'beta_2'`` into ``('beta', 1)``; ``'alpha'`` gives ``('alpha', -1)``."""
    if name == "alpha":
        return "alpha", -1
    head, _, idx = name.partition("_")
    if head in ("beta", "k") and idx.isdigit() and int(idx) >= 1:
        return head, int(idx) - 1
    raise ConfigurationError(f"unknown parameter name {name!r}")


def param_bounds(name: str) -> tuple[float, float]:
    """Admissible open interval of a parameter."""
    kind, _ = parse_param(name)
    return {"alpha": (0.0, 1.0), "beta": (1.0, 2.0), "k": (0.0, float("inf"))}[kind]

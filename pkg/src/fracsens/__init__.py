"""Space-time fractional PDE solver with parameter sensitivities and order estimation."""

from .assembly import Discretization, OperatorSet, assemble, build_fse_load, build_load
from .errors import (
    AccuracyError,
    ConfigurationError,
    DomainError,
    FracSensError,
    SingularityError,
    SolverError,
    StallError,
)
from .estimate import (
    ErrorType,
    EstimateOptions,
    EstimationTrace,
    ModelErrorSpec,
    SearchRegion,
    Status,
    coarse_grid_search,
    descent_step,
    estimate,
    model_error,
    model_error_gradient,
)
from .fields import FabricatedField, PowerTerm, SeparableFunction
from .fracops import FracOrder, SampledFunction, Side
from .model import ModelParams, ProblemKind
from .sensitivity import (
    SensitivitySet,
    finite_difference_sensitivity,
    solve_forward,
    solve_sensitivities,
)
from .solver import direct_solve, evaluate_field, evaluate_grid, fast_solve, l2_error, solve
from .specfun import BasisConfig, GradedMesh, QuadKind, QuadratureRule, gauss_rule

__version__ = "0.1.0"

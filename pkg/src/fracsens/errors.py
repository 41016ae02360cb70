"""Exception hierarchy shared by all modules."""


class FracSensError(Exception):
    """Base class for all package errors."""


class DomainError(FracSensError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConfigurationError(FracSensError, ValueError):
    """Inconsistent or unsupported configuration."""


class SingularityError(FracSensError, ArithmeticError):
    """A quantity is infinite or a linear system is singular."""


class AccuracyError(FracSensError, ArithmeticError):
    """A numerical approximation did not reach the requested accuracy."""


class SolverError(FracSensError, RuntimeError):
    """A linear solve failed or exceeded its size limits."""


class StallError(FracSensError, RuntimeError):
    """An iterative search stopped making progress."""

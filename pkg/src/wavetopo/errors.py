"""Exception types shared across the package."""


class WavetopoError(Exception):
    """Base class for all package errors."""


class InvalidArgument(WavetopoError, ValueError):
    """An argument violates a documented precondition."""


class NumericDegeneracy(WavetopoError, ArithmeticError):
    """Geometry or a matrix is degenerate (zero area, nonpositive mass, ...)."""


class SolverFailure(WavetopoError, RuntimeError):
    """A linear solve failed or did not reach the residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(WavetopoError, ValueError):
    """Configuration could not be parsed or validated.

    ``key`` holds the dotted path of the offending entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class RunAborted(WavetopoError, RuntimeError):
    """An optimization run failed; ``iteration`` is where it happened."""

    def __init__(self, iteration, cause):
        super().__init__(f"run aborted at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause

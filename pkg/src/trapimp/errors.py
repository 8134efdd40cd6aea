"""Exception types shared across the package."""


class TrapImpError(Exception):
    """Base class for package errors."""


class ConfigurationError(TrapImpError):
    """Invalid physical configuration or config file."""


class EvaluationError(TrapImpError):
    """A numerical evaluation failed (non-convergence, degenerate branch, ...)."""


class DomainError(EvaluationError):
    """Argument outside the mathematical domain of the operation."""


class PoleError(EvaluationError):
    """Evaluation requested at (or too close to) a pole.

    Carries the pole location so callers can bracket around it instead of
    mistaking the divergence for a root.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class SolverError(TrapImpError):
    """Root scan or state extraction failed."""


class DegenerateStateError(SolverError):
    """Numerically two-dimensional null space at a root.

    ``directions`` holds both candidate null vectors.
    """

    def __init__(self, message, directions=None):
        super().__init__(message)
        self.directions = directions


class BasisConditionError(TrapImpError):
    """Variational overlap matrix is (numerically) singular or indefinite."""


class ConditioningWarning(UserWarning):
    """Variational basis close to linear dependence; results degrade."""


class ExportError(TrapImpError):
    """I/O failure while writing or reading an artifact; carries the path."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path

"""Trapped atom + static zero-range impurities: exact spectra via Green's-function determinants."""

from .errors import (
    BasisConditionError,
    ConfigurationError,
    DegenerateStateError,
    DomainError,
    EvaluationError,
    ExportError,
    PoleError,
    SolverError,
    TrapImpError,
)
from .specfn import SpecFnAccuracy, f_shorthand, gamma, kummer_m, log_gamma, tricomi_u

__version__ = "0.1.0"

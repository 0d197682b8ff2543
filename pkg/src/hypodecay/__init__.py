"""Propagator norms and hypocoercive decay for linear Fokker-Planck equations."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConditionViolationError,
    HypodecayError,
    InvalidInputError,
    NumericalFailureError,
    ResourceError,
    VerificationFailure,
)
from .fp_core import FpProblem, kinetic_drift, kinetic_problem, normalize  # noqa: F401

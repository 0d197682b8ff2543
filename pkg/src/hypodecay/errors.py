"""Exception hierarchy.

Each class carries the process exit code the command-line front end uses
when the error escapes a command.
"""


class HypodecayError(Exception):
    exit_code = 3


class InvalidInputError(HypodecayError, ValueError):
    """Malformed or out-of-domain input (shape, symmetry, finiteness, sign)."""

    exit_code = 2


class ConditionViolationError(HypodecayError):
    """The problem violates a structural hypothesis (Condition A / its raw form)."""

    exit_code = 2

    def __init__(self, message, clause=None):
        super().__init__(message)
        self.clause = clause


class NoUniqueSolutionError(ConditionViolationError):
    pass


class DefectiveInputError(InvalidInputError):
    pass


class UnboundedSupremumError(InvalidInputError):
    pass


class NumericalFailureError(HypodecayError):
    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IllConditionedError(NumericalFailureError):
    pass


class InsufficientSignalError(NumericalFailureError):
    pass


class ResourceError(HypodecayError):
    exit_code = 2


class VerificationFailure(HypodecayError):
    exit_code = 1

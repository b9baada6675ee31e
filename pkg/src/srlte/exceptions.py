"""Exception hierarchy.

``InputError`` covers malformed or out-of-domain inputs; ``NumericalError``
covers failures of the numerics themselves (separation, singular systems).
The CLI maps the two families onto distinct exit codes.
"""


class SrlteError(Exception):
    """Base class for all package errors."""

    code = "error"


class InputError(SrlteError, ValueError):
    code = "input-error"


class ParameterDomainError(InputError):
    code = "parameter-domain"


class NumericalError(SrlteError, ArithmeticError):
    code = "numerical-failure"


class SingularMatrixError(NumericalError):
    code = "singular-matrix"


class DegenerateWeightError(NumericalError):
    """A fitted probability sits within the weight floor of 0 or 1."""

    code = "degenerate-weight"

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class SeparationError(NumericalError):
    code = "complete-separation"

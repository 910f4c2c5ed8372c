"""Exception types shared across modules.

The CLI maps :class:`SpecError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class SpecError(ValueError):
    """The geometry description is malformed or inconsistent."""


class NumericalError(ArithmeticError):
    """A numerical precondition failed at some point (singular matrix,
    positivity loss, non-convergence, leaving the domain)."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point

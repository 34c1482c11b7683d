"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation errors exit 2,
numerical blow-ups exit 3, degenerate Monte Carlo ensembles exit 4.
"""


class RoughSDEError(Exception):
    """Base class for all package errors."""


class ValidationError(RoughSDEError, ValueError):
    """Invalid input: bad shapes, exponents out of range, broken invariants."""


class GridError(ValidationError):
    """Degenerate or incompatible time grids."""


class BlowUpError(RoughSDEError, ArithmeticError):
    """A solver step produced non-finite state.

    Carries the time at which the step failed in ``time``.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DegenerateEnsembleError(RoughSDEError, RuntimeError):
    """Monte Carlo weights collapsed (effective sample size too small)."""

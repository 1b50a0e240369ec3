"""Exception types shared across the package.

Validation problems (bad shapes, bad hyperparameters) and numerical failures
(non-PD matrices, non-convergence) are kept apart so the CLI can map them to
distinct exit codes.
"""


class EnvcalviError(Exception):
    """Base class; ``details`` is a JSON-serializable dict."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        out = {"error": type(self).__name__, "message": self.message}
        for key, val in self.details.items():
            out[key] = _jsonable(val)
        return out


class ValidationError(EnvcalviError, ValueError):
    """Input or configuration is inconsistent."""


class NumericalError(EnvcalviError, ArithmeticError):
    """A computation could not be completed reliably."""


class NotPositiveDefiniteError(NumericalError):
    """A matrix required to be SPD is not."""


class CurvatureError(NumericalError):
    """The Hessian at a claimed mode is not negative definite."""


class ConvergenceError(NumericalError):
    """An iterative routine ran out of iterations.

    ``details`` carries the last iterate and its gradient norm.
    """


class AssumptionError(ValidationError):
    """An inequality required by an analytic bound does not hold."""


def _jsonable(val):
    try:
        import numpy as np
    except ImportError:  # pragma: no cover
        return val
    if isinstance(val, np.ndarray):
        return val.tolist()
    if isinstance(val, (np.floating, np.integer)):
        return val.item()
    return val

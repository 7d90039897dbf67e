"""Exception types shared across the package.

The CLI maps ValidationError to exit code 2 and NumericalError to exit
code 3; everything else is a bug.
"""


class ValidationError(ValueError):
    """An input violates a documented invariant; the message names it."""


class NumericalError(ArithmeticError):
    """A numerical operation failed (singular matrix, divergence).

    ``payload`` carries the offending object (e.g. the singular innovation
    covariance) for diagnostics.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class TrainingDivergedError(NumericalError):
    """A non-finite parameter or loss appeared during SGD training."""

    def __init__(self, message, step_index):
        super().__init__(message, payload=step_index)
        self.step_index = step_index

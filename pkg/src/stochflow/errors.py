"""Exceptions shared across modules.

Argument problems raise ``ValueError``; failures of the numerics raise a
``NumericalError`` carrying a diagnostic payload that the CLI reports.
"""


class NumericalError(RuntimeError):
    def __init__(self, message: str, **payload):
        super().__init__(message)
        self.payload = payload


class FieldEvaluationError(NumericalError):
    """A coefficient field returned non-finite values."""


class IntervalTooLongError(NumericalError):
    """Picard iteration for the Zvonkin corrector stopped contracting."""


class HorizonTooLongError(NumericalError):
    """Navier-Stokes fixed-point iteration stopped contracting."""

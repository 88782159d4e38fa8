"""
Exception hierarchy for the Boussinesq spectral suite.

Library code raises these; the CLI in boussinesq_suite.py turns them into
result dictionaries and exit codes.
"""


class SuiteError(Exception):
    """Base class for every error raised by the suite."""


class GridError(SuiteError, ValueError):
    """Invalid grid parameters."""


class GridMismatchError(GridError):
    """Operands live on different grids or time lines."""


class DomainError(SuiteError, ValueError):
    """A precondition on an argument was violated."""


class ExponentError(DomainError):
    """An exponent inequality does not hold. The message names it."""


class ConfigValidationError(SuiteError):
    """Aggregated configuration errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) if self.errors else "invalid configuration")


class NumericalInvariantError(SuiteError):
    """A monitored numerical invariant broke (maximum principle, divergence, ...)."""


class TransportCFLError(NumericalInvariantError):
    """The transport step exhausted its sub-step budget."""


class NonFiniteFieldError(NumericalInvariantError):
    """A field picked up NaN or Inf values."""

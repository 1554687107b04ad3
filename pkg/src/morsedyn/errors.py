"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation -> 1, numerical/runtime -> 2,
capacity -> 3.
"""


class MorsedynError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(MorsedynError, ValueError):
    """Input violates a documented precondition."""


class OutOfDomainError(ValidationError):
    """A point lies outside the grid domain."""


class UnknownCellError(MorsedynError, KeyError):
    """A cell id is not a leaf of the grid."""


class CapacityError(MorsedynError):
    """An operation would exceed the configured leaf cap."""


class NumericalError(MorsedynError, ArithmeticError):
    """A numerical routine failed (e.g. Cholesky after jitter escalation)."""

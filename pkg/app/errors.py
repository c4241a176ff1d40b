"""
Error Types
===========
Exception hierarchy used across the package.

The command line maps these onto exit codes:
- InvalidInputError (and pydantic validation errors) -> 1
- NumericalFailure -> 2
"""


class AnisoError(Exception):
    """Base class for every error raised by the package"""

    exit_code = 1


class InvalidInputError(AnisoError, ValueError):
    """Input violates a documented precondition"""

    exit_code = 1


class EnumerationLimitError(InvalidInputError):
    """Exhaustive enumeration would exceed the node guard"""


class NumericalFailure(AnisoError, RuntimeError):
    """Solver divergence, non-finite values or a failed numerical guard"""

    exit_code = 2

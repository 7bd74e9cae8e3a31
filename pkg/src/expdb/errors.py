"""Exception types shared across the package."""

from __future__ import annotations


class ExpdbError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ExpdbError):
    """An argument violates an operation's preconditions."""


class ValidationError(ExpdbError):
    """A document failed schema or invariant validation.

    Carries the ValidationReport so callers can inspect individual
    violations.
    """

    def __init__(self, report, message: str = "document validation failed"):
        super().__init__(message)
        self.report = report


class NotFoundError(ExpdbError):
    """The requested artifact or object does not exist."""


class ConflictError(ExpdbError):
    """An artifact with the same id already exists."""


class IntegrityError(ExpdbError):
    """A referential-integrity rule would be violated."""

    def __init__(self, message: str, referrers: list | None = None):
        super().__init__(message)
        self.referrers = referrers or []


class MissingMetricError(ExpdbError):
    """A run lacks the metric required by an aggregation."""


class ContractViolationError(ExpdbError):
    """A stateful protocol was driven out of order (e.g. observing a
    configuration that was never proposed)."""


class InvalidStateError(ExpdbError):
    """An object was used before it was properly initialised/fitted."""

"""Exception types shared across the toolkit."""

from __future__ import annotations


class OverlapKitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(OverlapKitError):
    """An input violates a structural invariant."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class SizeGuardError(OverlapKitError):
    """An exhaustive enumeration would exceed its configured cap."""


class BudgetExceeded(OverlapKitError):
    """A construction or search ran past its budget.

    ``where`` names the stage that gave up so callers can report provenance.
    """

    def __init__(self, message: str, where: str = "", partial=None):
        super().__init__(message)
        self.where = where
        self.partial = partial

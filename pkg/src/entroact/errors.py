"""Exception hierarchy shared by every module."""


class EntroactError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(EntroactError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(EntroactError):
    """A configured budget (memory, words, oracle size, horizon) would be exceeded.

    ``hint`` carries a remediation suggestion surfaced by the CLI.
    """

    def __init__(self, message, hint=None):
        super().__init__(message)
        self.hint = hint


class InsufficientDataError(EntroactError):
    """Too few usable points to fit a growth rate."""


class InvariantViolation(EntroactError, AssertionError):
    """A mathematically guaranteed inequality failed; indicates a bug."""


class DiagnosticError(EntroactError):
    """A numerical post-check failed. ``trace`` holds the stage record."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []

"""Exception hierarchy shared across the package.

Every error carries a machine-readable ``category`` that the CLI maps to a
stable exit code, so scripts can branch on failure class without parsing
messages.
"""


class PushnetError(Exception):
    """Base class for all package errors."""

    category = "error"
    exit_code = 1


class ParseError(PushnetError):
    """Malformed input file (bad token, wrong field count, broken header)."""

    category = "parse"
    exit_code = 3


class DomainError(PushnetError):
    """Value outside the documented domain of an operation."""

    category = "domain"
    exit_code = 4


class ConfigurationError(PushnetError):
    """Invalid or inconsistent configuration / model specification."""

    category = "config"
    exit_code = 2


class NumericalError(PushnetError):
    """Numerical failure: singular system, non-finite gradient, overflow."""

    category = "numerical"
    exit_code = 5

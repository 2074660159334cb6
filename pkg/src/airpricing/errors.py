"""Exception hierarchy shared across the toolkit.

Every error carries a short ``category`` used by the CLI to prefix messages
and pick exit codes.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class DomainError(ToolkitError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    category = "domain"


class ConvergenceError(ToolkitError, RuntimeError):
    """An iterative solver failed to converge within its iteration budget."""

    category = "numerics"


class ConfigError(ToolkitError, ValueError):
    """Invalid configuration value or combination."""

    category = "config"


class SchemaError(ToolkitError, ValueError):
    """A file does not match the expected schema (bad header, bad field)."""

    category = "schema"


class DataError(ToolkitError, ValueError):
    """Inconsistent or insufficient data (misalignment, missing group, ...)."""

    category = "data"


class PolicyError(ToolkitError, ValueError):
    """A pricing policy precondition is violated (sign, degeneracy, ...)."""

    category = "policy"

"""Toolkit-wide exception types, mapped to CLI exit codes by the client."""


class ToolkitError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class UsageError(ToolkitError):
    """Bad arguments, unknown config keys, invalid combinations. Exit code 1."""

    exit_code = 1


class DataError(ToolkitError):
    """Malformed or inconsistent on-disk data. Exit code 2."""

    exit_code = 2


class NonFiniteError(ToolkitError):
    """NaN or Inf encountered in a numeric pass. Exit code 3."""

    exit_code = 3

"""Exception taxonomy shared by the library and the CLI.

The CLI maps these onto process exit codes: UsageError and its subclasses
exit 2, DataFormatError exits 3, NumericError exits 4.
"""


class UsageError(Exception):
    """Caller violated a contract (bad argument, missing input, bad mode)."""


class ConfigError(UsageError):
    """Model or run configuration is inconsistent or incomplete."""


class ShapeError(UsageError):
    """Array dimensions do not satisfy an operation's contract."""


class DomainError(UsageError):
    """A numeric argument is outside the valid domain (e.g. delta <= 0)."""


class UnsupportedModeError(UsageError):
    """Operation invoked in a mode it does not support (e.g. selective
    parameters passed to the time-invariant kernel builder)."""


class DataFormatError(Exception):
    """A file failed to parse or validate; nothing partial is returned."""


class NumericError(Exception):
    """A non-finite value appeared where finite math was required."""

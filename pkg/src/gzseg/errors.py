"""Exception types shared across the package."""


class GzsegError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(GzsegError):
    """A binary file is malformed: bad magic, bad version, truncation."""


class ValidationError(GzsegError):
    """A data or parameter invariant is violated; the message names the rule."""


class ConfigError(GzsegError):
    """Configuration text could not be parsed or is internally inconsistent."""


class NumericalError(GzsegError):
    """An iterative numerical procedure diverged or failed to converge."""

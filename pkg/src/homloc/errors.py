"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation and configuration
problems exit 2, numeric failures (non-convergence, degenerate information)
exit 3, and file format or I/O problems exit 4.
"""


class HomlocError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(HomlocError, ValueError):
    """A domain object or configuration value violates an invariant."""


class ConfigError(ValidationError):
    """A scenario configuration file is malformed or inconsistent.

    Carries the offending field path when known, e.g. "polarization.nu".
    """

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class NumericError(HomlocError, RuntimeError):
    """A numeric procedure failed to reach its accuracy or convergence target."""


class QuadratureError(NumericError):
    """Estimated quadrature error exceeds the requested tolerance."""


class ConvergenceError(NumericError):
    """An iterative fit or search did not converge."""


class DegenerateInformationError(NumericError):
    """Information is exactly zero or the outcome probability is degenerate."""


class DataFormatError(HomlocError, ValueError):
    """An event or data file cannot be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

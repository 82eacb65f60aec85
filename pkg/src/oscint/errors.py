"""Exception hierarchy shared across the package."""


class OscintError(Exception):
    """Base class for all errors raised by oscint."""


class DomainError(OscintError, ValueError):
    """A point lies outside the model's domain box."""


class PreconditionError(OscintError, ValueError):
    """An operation's precondition was violated (singular block, derivative bound, ...)."""


class InfiniteTypeError(OscintError):
    """No derivative order up to the probe limit was found to be nonvanishing."""


class UndefinedProfileError(OscintError, ValueError):
    """Exactly one of the left/right types is zero."""


class OutOfTheoryError(OscintError, ValueError):
    """Requested hbar is below lambda^(-1/2), where the estimates do not apply."""


class ResolutionError(OscintError):
    """The quadrature grid required for the requested lambda exceeds the budget."""


class BudgetError(OscintError):
    """A block family or table is larger than the configured budget."""


class IterationError(OscintError):
    """Power iteration failed to converge."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class GridMismatchError(OscintError, ValueError):
    """Operators in a family do not share grids."""


class FitError(OscintError, ValueError):
    """Not enough (or invalid) data for a log-log fit."""


class SamplingError(OscintError):
    """Rejection sampling could not produce the requested samples."""


class ConfigError(OscintError, ValueError):
    """Malformed or invalid run configuration."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line

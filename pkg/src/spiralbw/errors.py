"""Exception types shared across the package."""


class SpiralBWError(Exception):
    """Base class for all errors raised by spiralbw."""


class DomainError(SpiralBWError, ValueError):
    """Input outside the domain of an operation."""


class SingularityError(SpiralBWError, ZeroDivisionError):
    """A closed-form expression hit an exact pole."""


class ConvergenceError(SpiralBWError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``estimate`` carries the best value reached.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class EmptySubspaceError(SpiralBWError, ValueError):
    """Post-selection kept no probability weight."""


class RangeError(SpiralBWError, ValueError):
    """A truncated range misses too much of a distribution."""


class UndefinedError(SpiralBWError, ZeroDivisionError):
    """A ratio statistic has a zero denominator."""


class ConfigError(SpiralBWError, ValueError):
    """Invalid scenario configuration. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)

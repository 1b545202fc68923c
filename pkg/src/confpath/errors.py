"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent user-supplied parameters."""


class UnsupportedProblemError(ConfigError):
    """Loss/regularizer combination outside what an operation supports."""


class NumericRangeError(ArithmeticError):
    """A value left the representable floating-point range (e.g. exp overflow)."""


class DualInfeasibleError(ValueError):
    """A dual vector lies outside the dual domain; no finite certificate exists."""


class OutOfRangeError(ValueError):
    """A candidate label falls outside the covered label range."""


class CsvFormatError(ConfigError):
    """A CSV input does not satisfy the expected tabular layout."""


class ConvergenceError(RuntimeError):
    """The solver exhausted its iteration budget before certifying the target gap."""

    def __init__(self, message, best_gap=None, z=None):
        super().__init__(message)
        self.best_gap = best_gap
        self.z = z

"""Exception types raised across the toolkit."""


class SelfTuneError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(SelfTuneError, ValueError):
    """Array shapes or indices are inconsistent."""


class NumericError(SelfTuneError, ArithmeticError):
    """A numerical routine failed (singular system, indefinite matrix, ...).

    ``estimate`` carries the last iterate when the failure came from an
    iterative method.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class CapacityError(SelfTuneError):
    """A combinatorial construction would exceed its configured budget."""


class UnstabilizableError(SelfTuneError):
    """No candidate architecture admits a stabilizing Riccati solution."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ConfigError(SelfTuneError, ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

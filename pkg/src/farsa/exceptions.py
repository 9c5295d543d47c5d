"""Exception types raised by the solver stack."""


class FarsaError(Exception):
    """Base class for all package errors."""


class DimensionError(FarsaError, ValueError):
    """Vector length does not match the problem dimension."""


class NonDifferentiableError(FarsaError, ValueError):
    """A gradient or Hessian of the regularizer was requested at a zero block."""


class NotPositiveDefiniteError(FarsaError, ArithmeticError):
    """Curvature along a direction was found to be non-positive."""


class LineSearchError(FarsaError, RuntimeError):
    """Backtracking exceeded its cap without satisfying the acceptance test."""

    def __init__(self, message, backtracks=None):
        super().__init__(message)
        self.backtracks = backtracks


class LibSVMParseError(FarsaError, ValueError):
    """Malformed LIBSVM input. Carries the 1-based offending line number."""

    def __init__(self, message, lineno):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class UnsupportedDatasetError(FarsaError, ValueError):
    """Dataset cannot be used for binary classification."""

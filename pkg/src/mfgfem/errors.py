"""Exception types shared across the package."""


class MFGError(Exception):
    """Base class for all package errors."""


class GeometryError(MFGError, ValueError):
    """Degenerate or non-conforming mesh geometry."""


class MeshFormatError(MFGError, ValueError):
    """An MFGMESH file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigurationError(MFGError, ValueError):
    """Invalid parameters, preconditions, or run configuration."""


class NumericError(MFGError, ArithmeticError):
    """Non-finite values where finite data is required."""


class InvariantViolation(MFGError, AssertionError):
    """A verified-by-construction property failed at runtime."""


class SolverError(MFGError, RuntimeError):
    """A linear or nonlinear solve failed."""


class NonConvergenceError(SolverError):
    """Iteration budget exhausted; carries the residual history."""

    def __init__(self, message, history=None, last_residual=None):
        super().__init__(message)
        self.history = history if history is not None else []
        self.last_residual = last_residual

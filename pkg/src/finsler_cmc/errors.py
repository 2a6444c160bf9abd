"""Exception hierarchy shared by every module of the package."""


class FinslerError(Exception):
    """Base class for all errors raised by finsler_cmc."""


class ConfigError(FinslerError):
    """Invalid configuration (bad key, bad value, unsupported order)."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where += f" [key '{key}'"
            if line is not None:
                where += f", line {line}"
            where += "]"
        super().__init__(message + where)


class DegenerateDirectionError(FinslerError):
    """A tangent vector or covector argument was zero."""


class DefinitenessError(FinslerError):
    """A matrix that must be positive definite is not."""


class NumericError(FinslerError):
    """An iterative solver or a quadrature failed to converge."""


class WindTooStrongError(FinslerError):
    """The navigation constraint F(x, -W(x)) < 1 is violated."""


class ChartDegeneracyError(FinslerError):
    """The chart Jacobian of an embedding lost rank at a node."""


class OrientationError(FinslerError):
    """An induced volume density came out non-positive."""


class PreconditionError(FinslerError):
    """A documented precondition of an operation does not hold."""


class UnsupportedError(FinslerError):
    """The requested configuration is outside the supported family."""


class InvalidNormError(FinslerError):
    """A dual norm violates the strict convexity condition."""

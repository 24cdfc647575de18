"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Argument shapes do not agree with the object's dimension."""


class UnsupportedError(ValueError):
    """Operation is not available for this dimension, order or spec type."""


class ContractError(ValueError):
    """A documented precondition (e.g. normalization) is violated."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class AccuracyError(RuntimeError):
    """Quadrature refinement failed to reach the requested tolerance."""


class FitError(RuntimeError):
    """Root-mixture fitting failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DivergenceError(RuntimeError):
    """Every start ran into the parameter bound with the objective still decreasing."""

    def __init__(self, message, direction=None, diagnostics=None):
        super().__init__(message)
        self.direction = direction
        self.diagnostics = diagnostics or {}


class InfeasibleError(RuntimeError):
    """Constraint violation stalled at the maximum penalty on every start."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution

"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """Raised when a map is applied to a point of the wrong dimension."""


class NonFiniteOutput(ArithmeticError):
    """Raised when a map returns NaN or Inf."""


class DomainViolation(ValueError):
    """Raised when an iterate leaves the declared domain of the operator."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(RuntimeError):
    """Raised when an inner iterative solver hits its iteration cap."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class EmptySetError(ValueError):
    """Raised when a feasible set turns out to be empty."""


class UncertifiedOracle(ValueError):
    """Raised when a gradient oracle cannot provide a finite error bound."""

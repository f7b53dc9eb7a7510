"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A caller-supplied parameter violates a documented bound."""


class NumericError(ArithmeticError):
    """A numerical routine could not reach its accuracy target."""


class ResourceError(RuntimeError):
    """An exact computation would exceed its enumeration budget."""


class ConvergenceError(NumericError):
    """An iterative solver stopped before reaching tolerance.

    Attributes:
      residual: the last residual observed.
      iterations: the number of iterations performed.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConstraintError(RuntimeError):
    """The input does not satisfy a precondition a privacy guarantee rests on."""

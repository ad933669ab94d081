"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid input or parameter outside its domain."""


class NumericalError(RuntimeError):
    """A linear-algebra or floating-point operation failed unexpectedly."""

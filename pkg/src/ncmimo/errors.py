"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class DegenerateProfileError(InvalidArgumentError):
    """Raised when a fading profile carries no power, so it cannot be normalized."""


class NumericalError(ArithmeticError):
    """Raised when a factorization or inversion fails on an ill-conditioned matrix."""

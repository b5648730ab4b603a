"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """Raised when an argument is malformed or out of range."""


class SingularGramError(RuntimeError):
    """Raised when a cross-Gram matrix is singular above the rank tolerance.

    Signals that the requested dual system does not exist relative to the
    given span (the vectors are not minimal with respect to it).
    """


class NetCapError(RuntimeError):
    """Raised when a requested sphere net would exceed the point budget."""

    def __init__(self, requested: int, cap: int):
        super().__init__(
            f"unit net would need {requested} points, cap is {cap}; "
            "lower the resolution demand or the span dimension"
        )
        self.requested = requested
        self.cap = cap


class ConstructionError(RuntimeError):
    """Raised when an inductive construction cannot be completed as specified."""

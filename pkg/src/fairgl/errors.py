"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or type invariant."""


class StructuralError(ValidationError):
    """Input is well-formed but structurally inconsistent (wrong rank,
    infeasible constraint set, empty group, ...)."""


class NumericalError(ArithmeticError):
    """A solver produced non-finite values or an eigendecomposition failed.

    Carries the last finite state when available (``state`` attribute).
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state

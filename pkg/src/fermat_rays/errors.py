"""Exception hierarchy shared by all modules."""


class FermatRaysError(Exception):
    pass


class DomainError(FermatRaysError, ValueError):
    """Query outside the domain of definition (point off-atlas, zero vector, too few samples)."""


class InvariantViolation(FermatRaysError, ValueError):
    """A structural invariant failed (beta <= 0, |omega| >= 1, g(W,W) >= 1, ...)."""


class ConfigurationError(FermatRaysError, ValueError):
    pass


class EscapeError(FermatRaysError, RuntimeError):
    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class StiffnessError(FermatRaysError, RuntimeError):
    """Adaptive step size underflowed."""


class DegeneracyError(FermatRaysError, ArithmeticError):
    """Fundamental tensor lost positive definiteness numerically."""

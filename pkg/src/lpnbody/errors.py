"""Exception types raised by the reduction, integrator and orbit search."""


class LPNBodyError(Exception):
    """Base class for all package errors."""


class CollisionError(LPNBodyError, ArithmeticError):
    """A mutual distance fell to (or below) the collision floor."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ExpansionError(LPNBodyError, ValueError):
    """A quadratic form does not lie in the span of the invariant basis."""


class RankError(LPNBodyError, ValueError):
    """The numerical kernel of the structure matrix has an unexpected dimension."""


class NoConvergence(LPNBodyError, RuntimeError):
    """Newton iteration exhausted its budget without meeting the tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SingularJacobian(LPNBodyError, RuntimeError):
    """The Newton Jacobian is numerically singular."""

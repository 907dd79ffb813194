"""Exception types shared across the package."""


class Collision(ValueError):
    """A pair separation vanishes somewhere on a segment."""

    def __init__(self, message, segment=None, pair=None):
        super().__init__(message)
        self.segment = segment
        self.pair = pair


class DegenerateSegment(ValueError):
    """Relative motion is antiparallel to the separation with a vanishing impact parameter."""


class NonConvergence(RuntimeError):
    """Adaptive quadrature hit its depth limit."""


class OutOfRange(ValueError):
    """An angle lies outside the domain of a bound or of the table coverage."""


class EndpointCollision(ValueError):
    """The base path collides at t = 0 or t = 1, so it cannot be extended."""


class AllRestartsCollapsed(RuntimeError):
    """Every minimizer restart ended at (or started in) a collision.

    The best (collapsed) result is attached as ``result`` so callers can still
    inspect it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result

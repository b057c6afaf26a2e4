"""Exception types raised across the package."""


class ParentSwarmError(Exception):
    """Base class for all package errors."""


class NonPositiveInertia(ParentSwarmError):
    pass


class EmptySwarm(ParentSwarmError):
    pass


class SingularSwarm(ParentSwarmError):
    """The abstract Jacobian lost rank (all members at one position)."""


class RiccatiFailure(ParentSwarmError):
    pass


class SecantDomain(ParentSwarmError):
    """|theta| reached pi/2, where the ARISE secant term is undefined."""


class NonFiniteState(ParentSwarmError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConstraintBreach(ParentSwarmError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class EmptyPreimage(ParentSwarmError):
    """Abstract point outside the image of R^N under the abstraction map."""


class ConfigError(ParentSwarmError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NonInvertibleRhoE(ParentSwarmError):
    """The ARISE region argument fell below rho_E(0); the region estimate is empty."""

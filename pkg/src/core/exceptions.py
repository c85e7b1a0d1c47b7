"""
Exception hierarchy - every failure carries the CLI exit code and the pipeline stage it belongs to
"""


class ReversibleChaosError(Exception):
    """Base class for all toolkit errors."""
    exit_code = 1
    stage = "error"


class ArtifactError(ReversibleChaosError):
    """Output could not be written or input could not be read."""
    exit_code = 1
    stage = "io"


# Precondition failures (exit code 2)

class PreconditionError(ReversibleChaosError):
    exit_code = 2
    stage = "precondition"


class UnsupportedFamilyError(PreconditionError):
    pass


# Construction failures (exit code 3)

class ConstructionError(ReversibleChaosError):
    exit_code = 3
    stage = "construction"


class IntegrationError(ConstructionError):
    pass


class EventNotFoundError(ConstructionError):
    pass


class OrbitNotClosedError(ConstructionError):
    pass


class GeometricFailureError(ConstructionError):
    pass


class NoLinkageError(ConstructionError):
    pass


class AmbiguousLinkageError(ConstructionError):
    pass


class OutOfDomainError(ConstructionError):
    pass


# Certification failures (exit code 4)

class CertificationError(ReversibleChaosError):
    exit_code = 4
    stage = "certification"


class TwistFailureError(CertificationError):
    """Twist condition not met; `best` holds the best winding/margin reached."""

    def __init__(self, message: str, best: float | None = None):
        super().__init__(message)
        self.best = best


class InvarianceViolationError(CertificationError):
    """A boundary point left the domain; `witness` is the offending point."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class ResolutionError(CertificationError):
    pass


class InsufficientCrossingError(CertificationError):
    pass


# Orbit failures (exit code 5)

class OrbitNotFoundError(ReversibleChaosError):
    """No seed converged; `best_residual` is the smallest residual reached."""
    exit_code = 5
    stage = "orbit"

    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


class ItineraryBreakError(ReversibleChaosError):
    """An iterate left every symbol region; `index` is the first failing iterate."""
    exit_code = 5
    stage = "orbit"

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index

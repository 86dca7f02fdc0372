"""Exception hierarchy shared by all citest modules."""


class CitestError(Exception):
    """Base class for all citest errors."""


class SupportViolation(CitestError):
    """P puts mass where Q has none, so D(P||Q) is infinite."""


class DimensionMismatch(CitestError):
    """Operands have incompatible support sizes or shapes."""


class InvalidDistribution(CitestError):
    """Probabilities are negative or do not sum to one within tolerance."""


class InvalidThreshold(CitestError):
    """A threshold parameter is outside its admissible range."""


class InfeasibleParameters(CitestError):
    """Hard-instance parameters leave no non-negative residual mass."""


class InsufficientSamples(CitestError):
    """A tester was handed fewer samples than its contract requires.

    `needed` carries the total requirement when the raiser knows it, so
    callers can regenerate a right-sized pool in one step.
    """

    def __init__(self, message: str, needed: int | None = None):
        super().__init__(message)
        self.needed = needed


class OddSampleCount(CitestError):
    """An operation that consumes samples in pairs got an odd count."""

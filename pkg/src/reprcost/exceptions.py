"""Exception hierarchy shared by all modules."""


class ReprCostError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ReprCostError, ValueError):
    """Non-finite entries or inconsistent shapes."""


class InvalidParameterError(ReprCostError, ValueError):
    """A scalar parameter is outside its admissible range."""


class StructureAbsentError(ReprCostError):
    """Weights lack the grouped-orthonormal structure a closed form needs."""


class ConstructionInfeasibleError(ReprCostError):
    """A constructed interpolant cannot be formed (e.g. a zero denominator).

    ``unit`` names the offending hidden unit when known.
    """

    def __init__(self, message, unit=None):
        super().__init__(message)
        self.unit = unit


class AgreementViolatedError(ReprCostError):
    """A construction no longer reproduces the source network on its data."""

    def __init__(self, message, unit=None, gap=None):
        super().__init__(message)
        self.unit = unit
        self.gap = gap


class DivergenceError(ReprCostError, FloatingPointError):
    """Training produced a non-finite loss."""

"""Exception hierarchy.

Validation problems derive from ``ValueError`` so that callers doing plain
argument checking keep working; the CLI maps each family to an exit code.
"""


class UrbanLosError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ValidationError(UrbanLosError, ValueError):
    exit_code = 2


class NonPositiveStreet(ValidationError):
    pass


class HighwayOverlap(ValidationError):
    pass


class DegenerateLink(ValidationError):
    pass


class GenerationError(UrbanLosError):
    exit_code = 3


class DimensionOverflow(GenerationError):
    pass


class CapUnsatisfiable(GenerationError):
    pass


class PlacementExhausted(GenerationError):
    pass


class NoHighways(GenerationError):
    pass


class InsufficientData(UrbanLosError):
    exit_code = 4


class EmptySupport(InsufficientData):
    pass

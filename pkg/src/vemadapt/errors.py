"""Exception types raised across the package."""


class VemError(Exception):
    """Base class for all package errors."""


class InvalidPolygon(VemError):
    pass


class NonStarShaped(InvalidPolygon):
    pass


class DegenerateSegment(VemError):
    pass


class NonConformingMesh(VemError):
    pass


class EmptyMesh(VemError):
    pass


class FrameMismatch(VemError):
    pass


class SingularMass(VemError):
    pass


class UnsupportedOrder(VemError):
    pass


class SingularTraceSystem(VemError):
    pass


class RankDeficientD(VemError):
    pass


class SolverBreakdown(VemError):
    pass


class SingularSystem(VemError):
    pass


class MissingExactSolution(VemError):
    pass


class GenerationFailed(VemError):
    pass

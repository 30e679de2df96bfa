"""Exception types raised across the package."""


class ShellXYError(Exception):
    """Base class for all package errors."""


class PointOffSurface(ShellXYError):
    """A point does not lie on the surface within the projection tolerance."""


class NotTangent(ShellXYError):
    """A vector has a normal component exceeding the tangency tolerance."""


class OutsideTubularNeighbourhood(ShellXYError):
    """A point is too far from the surface for nearest-point projection."""


class WrongSurfaceKind(ShellXYError):
    """A mesh generator was called with an incompatible surface."""


class ResolutionTooLow(ShellXYError):
    """A generator resolution parameter is below its minimum."""


class DegenerateTriangle(ShellXYError):
    """A triangle has (near-)zero area."""


class H4Unavailable(ShellXYError):
    """No canonical refinement correspondence exists for this mesh family."""


class BallTooSmall(ShellXYError):
    """A discrete geodesic ball contains fewer than 3 triangles."""


class LengthMismatch(ShellXYError):
    """Array lengths of mesh-aligned structures disagree."""


class VanishingField(ShellXYError):
    """An analytic field vanishes (|v| < tol) at a mesh vertex."""


class BadBarycentric(ShellXYError):
    """Barycentric coordinates are negative or do not sum to 1."""


class ChargeMismatch(ShellXYError):
    """Prescribed defect charges do not sum to the Euler characteristic."""


class AmbiguousWinding(ShellXYError):
    """Winding residual too large; the field varies too fast for the mesh."""


class UnresolvedRegion(ShellXYError):
    """Ambiguous-winding triangles form a defect cluster of their own."""


class CoreOverlap(ShellXYError):
    """A region boundary passes too close to a defect core."""


class QuadratureTooCoarse(ShellXYError):
    """Quadrature resolution below the supported minimum."""


class HairyBallUnsupported(ShellXYError):
    """No smooth unit tangent field exists on a surface with chi != 0."""


class NotConverged(ShellXYError):
    """An iterative solve failed to reach its tolerance."""


class DefectsTooClose(ShellXYError):
    """Defect separation is insufficient for the requested radii."""


class DeltaTooSmall(ShellXYError):
    """An excision radius is too small relative to the mesh size."""


class ConfigError(ShellXYError):
    """Experiment configuration failed schema validation."""

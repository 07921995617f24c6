"""Exception hierarchy.

Every error carries a ``stage`` so the command line can say where a run broke.
"""


class HexwallError(Exception):
    stage = "general"


class InvalidSpecError(HexwallError, ValueError):
    """A configuration or input value violates a documented invariant."""

    stage = "config"


class GeometryError(HexwallError):
    stage = "geometry"


class STLParseError(GeometryError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptySurfaceError(GeometryError):
    pass


class MultiBranchError(GeometryError):
    """A slicing plane cut zero or several closed loops."""


class NonStarShapedError(GeometryError):
    """A cross-section is not star-shaped about its centroid."""

    def __init__(self, message, slice_index=None, angle=None):
        super().__init__(message)
        self.slice_index = slice_index
        self.angle = angle


class MeshError(HexwallError):
    stage = "mesh"


class WallSelfIntersectionError(MeshError):
    pass


class OverlapError(MeshError):
    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class TopologyError(MeshError):
    def __init__(self, message, dangling_edges=()):
        super().__init__(message)
        self.dangling_edges = list(dangling_edges)


class SolverError(HexwallError):
    stage = "solve"

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class RigidModeError(SolverError):
    pass


class AssemblyError(SolverError):
    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class QualityGateError(HexwallError):
    """Elements fail a hard quality threshold."""

    stage = "quality"

    def __init__(self, message, summary=None):
        super().__init__(message)
        self.summary = summary or {}

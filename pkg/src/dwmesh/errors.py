"""Exception types shared across the package."""


class DWMeshError(Exception):
    """Base class for all package errors."""


class InvalidDMax(DWMeshError):
    """Boundary padding depth does not exceed every interior depth."""


class DimensionTooSmall(DWMeshError):
    """Grid too small to mesh (needs at least 2x2 pixels)."""


class DegenerateFace(DWMeshError):
    """Zero-area triangle encountered (reported, not raised, during builds)."""


class EmptyMesh(DWMeshError):
    """Mesh has no faces to render."""


class LengthMismatch(DWMeshError):
    """Paired sequences have different lengths."""


class OutOfBoundsTrack(DWMeshError):
    """Track sample coordinates fall outside the frame."""


class InvalidSpec(DWMeshError):
    """Orbit specification violates its invariants."""


class ParseError(DWMeshError):
    """Malformed external file."""


class NonPositiveDepth(DWMeshError):
    """Depth file contains values <= 0 or non-finite values."""


class NonMonotoneTrack(DWMeshError):
    """Track frame indices are not strictly increasing."""


class NonOrthonormalPose(DWMeshError):
    """Rotation matrix fails the orthonormality / determinant check."""


class InvariantViolation(DWMeshError):
    """Loaded or constructed value violates a type invariant."""

"""Watertight depth meshing.

Turns one RGB frame plus its depth map into a closed triangle mesh: every
pixel unprojects to a vertex, each 2x2 pixel cell contributes two
triangles, frame-border pixels are padded to a far depth so the border
ring is coplanar, and two large cap triangles seal that far plane. Faces
crossing depth discontinuities or degenerating into slivers carry an
occlusion bit and lose their texture.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .core import DepthMap, FrameRGB, Intrinsics, ray_grid
from .errors import DimensionTooSmall, InvalidDMax, InvariantViolation

logger = logging.getLogger(__name__)

DEFAULT_DELTA_ANGLE_DEG = 1.0
DEFAULT_DELTA_DEPTH_COEFF = 0.013
DEFAULT_D_MAX = 100.0


class FaceClass(IntEnum):
    SURFACE = 0
    SKIRT = 1  # touches a border vertex padded to d_max
    CAP = 2  # one of the two sealing triangles on the far plane


@dataclass(frozen=True)
class MeshParams:
    """Meshing thresholds and source camera.

    ``delta_depth`` overrides the derived threshold. Sequence pipelines set
    it once from the first frame's depth range and hold it fixed; left as
    None, each build derives it from its own depth map.
    """

    delta_angle_deg: float = DEFAULT_DELTA_ANGLE_DEG
    delta_depth_coeff: float = DEFAULT_DELTA_DEPTH_COEFF
    d_max: float = DEFAULT_D_MAX
    intrinsics: Intrinsics | None = None  # None: canonical camera at frame dims
    delta_depth: float | None = None

    def __post_init__(self):
        if not (0.0 < self.delta_angle_deg < 60.0):
            raise InvariantViolation("delta_angle_deg must lie in (0, 60)")
        if self.delta_depth_coeff <= 0.0:
            raise InvariantViolation("delta_depth_coeff must be positive")
        if self.d_max <= 0.0:
            raise InvariantViolation("d_max must be positive")


@dataclass(frozen=True)
class DWMesh:
    """Per-frame watertight mesh: vertices, faces, texture, occlusion bits.

    Vertices are camera-space float32 positions in row-major pixel order
    (vertex of pixel (i, j) sits at index i*W + j). Grid faces come in
    cell order, first triangle then second; the two cap faces are last.
    """

    vertices: np.ndarray  # (H*W, 3) float32
    faces: np.ndarray  # (F, 3) int32
    face_color: np.ndarray  # (F, 3) uint8
    face_occluded: np.ndarray  # (F,) bool
    face_class: np.ndarray  # (F,) uint8, FaceClass values
    height: int
    width: int

    def __post_init__(self):
        dtypes = {
            "vertices": np.float32,
            "faces": np.int32,
            "face_color": np.uint8,
            "face_occluded": bool,
            "face_class": np.uint8,
        }
        for name, dtype in dtypes.items():
            arr = np.asarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def n_grid_faces(self) -> int:
        return 2 * (self.height - 1) * (self.width - 1)

    def face_anchor(self, face_index: int) -> tuple[int, int]:
        """Source cell (i, j) of a grid face; caps anchor at (0, 0)."""
        if face_index >= self.n_grid_faces:
            return (0, 0)
        cell = face_index // 2
        return (cell // (self.width - 1), cell % (self.width - 1))

    def validate(self) -> None:
        """Raise InvariantViolation if any structural invariant fails."""
        h, w = self.height, self.width
        if self.n_vertices != h * w:
            raise InvariantViolation(f"vertex count {self.n_vertices} != H*W = {h * w}")
        expected = 2 * (h - 1) * (w - 1) + 2
        if self.n_faces != expected:
            raise InvariantViolation(f"face count {self.n_faces} != 2(H-1)(W-1)+2 = {expected}")
        if int(np.sum(self.face_class == FaceClass.CAP)) != 2:
            raise InvariantViolation("mesh must have exactly 2 CAP faces")
        if self.faces.min(initial=0) < 0 or self.faces.max(initial=-1) >= self.n_vertices:
            raise InvariantViolation("face index out of range")
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise InvariantViolation("face with repeated vertex index")
        black = np.all(self.face_color == 0, axis=1)
        if np.any(self.face_occluded & ~black):
            raise InvariantViolation("occluded face with non-black texture")
        if not np.all(self.face_occluded[self.face_class == FaceClass.CAP]):
            raise InvariantViolation("CAP faces must be occluded")


def delta_depth_threshold(depth: DepthMap, coeff: float = DEFAULT_DELTA_DEPTH_COEFF) -> float:
    """Depth-discontinuity threshold: coeff * (max - min) of the original signal."""
    return coeff * (depth.d_max - depth.d_min)


def pad_boundary(depth: DepthMap, d_max: float = DEFAULT_D_MAX) -> DepthMap:
    """Rewrite all frame-border pixels to d_max, keeping cached extrema.

    The cached d_min/d_max still describe the pre-padding signal; they feed
    the discontinuity threshold, which must not see the padding.
    """
    values = np.array(depth.values, dtype=np.float64)
    if depth.height > 2 and depth.width > 2:
        interior_max = float(values[1:-1, 1:-1].max())
        if d_max <= interior_max:
            raise InvalidDMax(f"d_max {d_max} must exceed max interior depth {interior_max}")
    values[0, :] = d_max
    values[-1, :] = d_max
    values[:, 0] = d_max
    values[:, -1] = d_max
    return DepthMap(values=values, d_min=depth.d_min, d_max=depth.d_max)


def build_faces(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Triangle index triples and classes for an H x W vertex grid.

    Cell (i, j) emits {(i,j), (i+1,j), (i,j+1)} then
    {(i+1,j), (i+1,j+1), (i,j+1)}, row-major over cells; two cap triangles
    over the corner vertices close the far plane. Faces touching any
    border vertex are SKIRT, the rest SURFACE.
    """
    if height < 2 or width < 2:
        raise DimensionTooSmall(f"need at least 2x2 pixels, got {height}x{width}")
    ii, jj = np.meshgrid(
        np.arange(height - 1, dtype=np.int64), np.arange(width - 1, dtype=np.int64), indexing="ij"
    )
    base = (ii * width + jj).ravel()  # vertex (i, j) of each cell
    n_cells = base.shape[0]
    tri1 = np.stack([base, base + width, base + 1], axis=1)
    tri2 = np.stack([base + width, base + width + 1, base + 1], axis=1)
    faces = np.empty((2 * n_cells + 2, 3), dtype=np.int32)
    faces[0 : 2 * n_cells : 2] = tri1
    faces[1 : 2 * n_cells : 2] = tri2
    corner = lambda i, j: i * width + j
    faces[-2] = (corner(0, 0), corner(0, width - 1), corner(height - 1, 0))
    faces[-1] = (corner(height - 1, 0), corner(height - 1, width - 1), corner(0, width - 1))

    border = np.zeros(height * width, dtype=bool)
    border[:width] = True
    border[-width:] = True
    border[0::width] = True
    border[width - 1 :: width] = True
    classes = np.where(border[faces].any(axis=1), FaceClass.SKIRT, FaceClass.SURFACE).astype(np.uint8)
    classes[-2:] = FaceClass.CAP
    return faces, classes


def unproject_vertices(depth_values: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Vertex positions depth * ray for every pixel, float32, row-major."""
    h, w = depth_values.shape
    rays = ray_grid(intr, h, w)
    verts = rays * depth_values[:, :, None]
    return verts.reshape(-1, 3).astype(np.float32)


def classify_occlusion(
    vertices: np.ndarray,
    faces: np.ndarray,
    pixel_depths: np.ndarray,
    delta_angle_deg: float,
    delta_depth: float,
) -> tuple[np.ndarray, int]:
    """Occlusion bit per face: sliver angle or depth jump.

    A face is occluded when the minimum interior angle of its 3D triangle
    falls below delta_angle_deg or the max pairwise depth difference among
    its three source pixels exceeds delta_depth. Zero-area triangles count
    as occluded and are tallied in the returned warning count.
    """
    v = vertices.astype(np.float64)[faces]  # (F, 3, 3)
    depths = pixel_depths.ravel()[faces]  # (F, 3)
    dd = depths.max(axis=1) - depths.min(axis=1)

    e_ab = v[:, 1] - v[:, 0]
    e_ac = v[:, 2] - v[:, 0]
    e_bc = v[:, 2] - v[:, 1]
    la = np.linalg.norm(e_ab, axis=1)
    lb = np.linalg.norm(e_ac, axis=1)
    lc = np.linalg.norm(e_bc, axis=1)
    area2 = np.linalg.norm(np.cross(e_ab, e_ac), axis=1)
    degenerate = (la == 0.0) | (lb == 0.0) | (lc == 0.0) | (area2 == 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        cos_a = np.einsum("ij,ij->i", e_ab, e_ac) / (la * lb)
        cos_b = np.einsum("ij,ij->i", -e_ab, e_bc) / (la * lc)
        cos_c = np.einsum("ij,ij->i", e_ac, e_bc) / (lb * lc)
    cosines = np.clip(np.stack([cos_a, cos_b, cos_c], axis=1), -1.0, 1.0)
    min_angle = np.arccos(cosines.max(axis=1))  # largest cosine = smallest angle

    occluded = degenerate | (min_angle < np.radians(delta_angle_deg)) | (dd > delta_depth)
    return occluded, int(degenerate.sum())


def assign_texture(frame: FrameRGB, anchors_ij: np.ndarray, occluded: np.ndarray) -> np.ndarray:
    """Flat per-face colors: the anchor pixel's color, or black when occluded."""
    colors = frame.pixels[anchors_ij[:, 0], anchors_ij[:, 1]].astype(np.uint8)
    colors[occluded] = 0
    return colors


def build_dwmesh(frame: FrameRGB, depth: DepthMap, params: MeshParams | None = None) -> DWMesh:
    """Full meshing pipeline for one frame. Deterministic for equal inputs."""
    params = params or MeshParams()
    if frame.height != depth.height or frame.width != depth.width:
        raise InvariantViolation(
            f"frame {frame.height}x{frame.width} and depth {depth.height}x{depth.width} dims differ"
        )
    h, w = depth.height, depth.width
    intr = params.intrinsics or Intrinsics.canonical(w, h)
    delta_depth = params.delta_depth
    if delta_depth is None:
        delta_depth = delta_depth_threshold(depth, params.delta_depth_coeff)

    padded = pad_boundary(depth, params.d_max)
    vertices = unproject_vertices(padded.values, intr)
    faces, classes = build_faces(h, w)

    occluded, n_degenerate = classify_occlusion(
        vertices, faces, padded.values, params.delta_angle_deg, delta_depth
    )
    occluded[classes == FaceClass.CAP] = True
    if n_degenerate:
        logger.warning("%d degenerate (zero-area) faces classified occluded", n_degenerate)

    cells = np.arange((h - 1) * (w - 1), dtype=np.int64)
    anchors = np.empty((faces.shape[0], 2), dtype=np.int64)
    anchors[0:-2:2, 0] = anchors[1:-2:2, 0] = cells // (w - 1)
    anchors[0:-2:2, 1] = anchors[1:-2:2, 1] = cells % (w - 1)
    anchors[-2:] = 0  # caps are occluded, anchor never sampled
    colors = assign_texture(frame, anchors, occluded)

    return DWMesh(
        vertices=vertices,
        faces=faces,
        face_color=colors,
        face_occluded=occluded,
        face_class=classes,
        height=h,
        width=w,
    )

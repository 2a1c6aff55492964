"""Core domain types: depth maps, frames, cameras, trajectories.

All types are immutable value objects; every operation here is pure, so
instances can be shared freely across worker threads.

Conventions used throughout the package:
  - camera space is right-handed with x right, y down, z forward
    (image up is -y);
  - depth is z-depth, i.e. distance along the optical axis, not ray
    length, so pixel rays are normalized to unit z;
  - poses are world-to-camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, NonOrthonormalPose

# Vertical field of view of the canonical source camera when no intrinsics
# are supplied. Nothing upstream pins this value; it is a repo convention,
# overridable via config.
DEFAULT_VFOV_DEG = 60.0

ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel positive z-depth field with cached pre-padding extrema.

    ``d_min``/``d_max`` describe the original signal; boundary padding
    rewrites border values without refreshing them.
    """

    values: np.ndarray  # (H, W) float64, all finite and > 0
    d_min: float
    d_max: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.size == 0:
            raise InvariantViolation(f"depth map must be a non-empty 2D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise InvariantViolation("depth values must be finite and > 0")
        if not (self.d_min <= self.d_max):
            raise InvariantViolation(f"d_min {self.d_min} > d_max {self.d_max}")

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DepthMap":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise InvariantViolation("depth map must be non-empty")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise InvariantViolation("depth values must be finite and > 0")
        return cls(values=values, d_min=float(values.min()), d_max=float(values.max()))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FrameRGB:
    """8-bit sRGB image, (H, W, 3) uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.uint8)
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.size == 0:
            raise InvariantViolation(f"frame must be (H, W, 3) uint8, got shape {pixels.shape}")

    @classmethod
    def constant(cls, height: int, width: int, color=(0, 0, 0)) -> "FrameRGB":
        return cls(np.full((height, width, 3), color, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvariantViolation("focal lengths must be positive")
        if not (0 <= self.cx <= self.width) or not (0 <= self.cy <= self.height):
            raise InvariantViolation("principal point must lie inside the frame")

    @classmethod
    def canonical(cls, width: int, height: int, vfov_deg: float = DEFAULT_VFOV_DEG) -> "Intrinsics":
        """Centered intrinsics with the given vertical field of view."""
        f = height / (2.0 * math.tan(math.radians(vfov_deg) / 2.0))
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: p_cam = rotation @ p_world + translation."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise NonOrthonormalPose(f"|R^T R - I|_max = {err:.3e} exceeds {ORTHONORMAL_TOL}")
        if np.linalg.det(rot) < 0.0:
            raise NonOrthonormalPose("rotation determinant must be +1")

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous world-to-camera matrix."""
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates: -R^T t."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class Trajectory:
    """Ordered camera poses sharing one set of intrinsics."""

    intrinsics: Intrinsics
    poses: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        for p in self.poses:
            if not isinstance(p, CameraPose):
                raise InvariantViolation("trajectory poses must be CameraPose instances")

    def __len__(self) -> int:
        return len(self.poses)


@dataclass(frozen=True)
class Video:
    """Ordered RGB frame sequence; all frames share dimensions."""

    frames: tuple

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        if frames:
            h, w = frames[0].height, frames[0].width
            for f in frames:
                if f.height != h or f.width != w:
                    raise InvariantViolation("all video frames must share dimensions")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i: int) -> FrameRGB:
        return self.frames[i]

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width


@dataclass(frozen=True)
class MaskVideo:
    """Binary visibility sequence, (T, H, W) uint8 with values in {0, 1}."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.uint8)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 3:
            raise InvariantViolation(f"mask video must be (T, H, W), got shape {frames.shape}")
        if frames.size and frames.max() > 1:
            raise InvariantViolation("mask values must be 0 or 1")

    def __len__(self) -> int:
        return self.frames.shape[0]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.frames[t]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


def pixel_ray(i: float, j: float, intr: Intrinsics) -> np.ndarray:
    """Ray direction through lattice index (i, j), normalized to unit z.

    Unit z means multiplying by a z-depth lands on the plane z = depth,
    which is what makes border padding produce coplanar vertices.
    """
    return np.array([(j - intr.cx) / intr.fx, (i - intr.cy) / intr.fy, 1.0])


def ray_grid(intr: Intrinsics, height: int, width: int) -> np.ndarray:
    """(H, W, 3) array of pixel rays for the full lattice."""
    jj = (np.arange(width, dtype=np.float64) - intr.cx) / intr.fx
    ii = (np.arange(height, dtype=np.float64) - intr.cy) / intr.fy
    rays = np.empty((height, width, 3), dtype=np.float64)
    rays[:, :, 0] = jj[None, :]
    rays[:, :, 1] = ii[:, None]
    rays[:, :, 2] = 1.0
    return rays


def world_to_camera(p: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Apply the world-to-camera transform to one point or an (N, 3) batch."""
    p = np.asarray(p, dtype=np.float64)
    return p @ pose.rotation.T + pose.translation

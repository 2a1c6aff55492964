"""Orbit camera trajectory synthesis.

Cameras orbit the point at median scene depth on the optical axis, at a
radius equal to that depth, so azimuth 0 reproduces the canonical source
camera exactly and every sweep passes through the original view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import CameraPose, DepthMap, Intrinsics, Trajectory
from .errors import InvalidSpec

# Named azimuth ranges (degrees) used by the evaluation sweeps.
ORBIT_RANGES = {
    "small": (0.0, 30.0),
    "large": (0.0, 60.0),
    "extreme": (0.0, 90.0),
    "full": (-90.0, 90.0),
}

WORLD_UP = np.array([0.0, -1.0, 0.0])  # image convention: y is down


class Easing(Enum):
    LINEAR = "linear"
    EASE_IN_OUT = "ease_in_out"


@dataclass(frozen=True)
class OrbitSpec:
    theta_start_deg: float
    theta_end_deg: float
    frames: int
    pivot_depth: float
    easing: Easing = Easing.LINEAR

    def __post_init__(self):
        if self.frames < 1:
            raise InvalidSpec("frame count must be >= 1")
        if self.pivot_depth <= 0:
            raise InvalidSpec("pivot depth must be positive")
        if abs(self.theta_start_deg) > 180 or abs(self.theta_end_deg) > 180:
            raise InvalidSpec("azimuth must lie in [-180, 180] degrees")


def look_at(position: np.ndarray, target: np.ndarray, up: np.ndarray = WORLD_UP) -> CameraPose:
    """World-to-camera pose looking from position toward target."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm == 0.0:
        raise InvalidSpec("look-at target coincides with camera position")
    forward = forward / norm
    down = -np.asarray(up, dtype=np.float64)
    right = np.cross(down, forward)
    r_norm = np.linalg.norm(right)
    if r_norm == 0.0:
        raise InvalidSpec("view direction parallel to the up axis")
    right = right / r_norm
    cam_down = np.cross(forward, right)
    rotation = np.stack([right, cam_down, forward])
    return CameraPose(rotation=rotation, translation=-rotation @ position)


def _ease(tau: float, easing: Easing) -> float:
    if easing is Easing.EASE_IN_OUT:
        return 3.0 * tau * tau - 2.0 * tau * tau * tau
    return tau


def make_orbit(spec: OrbitSpec, intr: Intrinsics) -> Trajectory:
    """Azimuth orbit about the vertical axis through the pivot point.

    The camera position for azimuth theta keeps distance pivot_depth from
    the pivot (0, 0, pivot_depth); theta = 0 lands exactly on the canonical
    identity camera. Endpoint azimuths are hit exactly.
    """
    d = spec.pivot_depth
    pivot = np.array([0.0, 0.0, d])
    poses = []
    for t in range(spec.frames):
        if spec.frames == 1:
            theta_deg = spec.theta_start_deg
        else:
            tau = t / (spec.frames - 1)
            e = _ease(tau, spec.easing)
            theta_deg = spec.theta_start_deg + e * (spec.theta_end_deg - spec.theta_start_deg)
        theta = math.radians(theta_deg)
        position = np.array([d * math.sin(theta), 0.0, d - d * math.cos(theta)])
        poses.append(look_at(position, pivot))
    return Trajectory(intrinsics=intr, poses=tuple(poses))


def default_pivot_depth(depth: DepthMap) -> float:
    """Median of the pre-padding depth values."""
    return float(np.median(depth.values))

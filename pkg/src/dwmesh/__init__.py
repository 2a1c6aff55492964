"""Watertight depth meshing, deterministic rendering, and mask synthesis.

The pipeline turns monocular frames plus depth maps into closed triangle
meshes, renders color/visibility videos along camera trajectories with a
deterministic software rasterizer, and simulates the occlusion masks
needed to train novel-view video models from single-camera footage.
"""

from .core import (
    CameraPose,
    DepthMap,
    FrameRGB,
    Intrinsics,
    MaskVideo,
    Trajectory,
    Video,
    pixel_ray,
    world_to_camera,
)
from .meshing import DWMesh, FaceClass, MeshParams, build_dwmesh
from .raster import RenderTarget, rasterize, render_trajectory
from .trajectory import Easing, OrbitSpec, make_orbit

__version__ = "0.1.0"

__all__ = [
    "CameraPose",
    "DWMesh",
    "DepthMap",
    "Easing",
    "FaceClass",
    "FrameRGB",
    "Intrinsics",
    "MaskVideo",
    "MeshParams",
    "OrbitSpec",
    "RenderTarget",
    "Trajectory",
    "Video",
    "build_dwmesh",
    "make_orbit",
    "pixel_ray",
    "rasterize",
    "render_trajectory",
    "world_to_camera",
]

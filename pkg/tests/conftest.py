"""Shared fixtures and helpers for the test suite."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from dwmesh.core import DepthMap, FrameRGB, world_to_camera
from dwmesh.formats import write_pfm
from dwmesh.meshing import DWMesh, FaceClass, MeshParams, build_dwmesh
from dwmesh.raster import _clip_polygon_near


def write_scene(root: Path, n_frames: int = 3, h: int = 12, w: int = 12, seed: int = 0):
    """Synthetic scene on disk: ramp colors, flat background, raised slab.

    The slab's depth cliff dominates the range, so the derived
    discontinuity threshold keeps the smooth regions unoccluded (as in
    real footage, where jumps dwarf surface gradients).
    """
    rng = np.random.default_rng(seed)
    frames_dir = root / "frames"
    depths_dir = root / "depths"
    frames_dir.mkdir(parents=True)
    depths_dir.mkdir(parents=True)
    yy, xx = np.mgrid[0:h, 0:w]
    for t in range(n_frames):
        pixels = np.stack(
            [(xx * 9 + t) % 256, (yy * 9) % 256, np.full((h, w), 60 + t)], axis=2
        ).astype(np.uint8)
        Image.fromarray(pixels, mode="RGB").save(frames_dir / f"frame_{t:05d}.png")
        values = 4.0 + rng.random((h, w)) * 0.002
        values[h // 3 : 2 * h // 3, w // 3 : 2 * w // 3] = 2.0 + rng.random((h // 3, w // 3)) * 0.002
        write_pfm(DepthMap.from_values(values), depths_dir / f"depth_{t:05d}.pfm")
    return frames_dir, depths_dir


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def random_scene(seed: int, height: int, width: int, d_lo: float = 0.5, d_hi: float = 2.5):
    """Seeded random frame + depth pair."""
    rng = np.random.default_rng(seed)
    depth = DepthMap.from_values(d_lo + rng.random((height, width)) * (d_hi - d_lo))
    frame = FrameRGB(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
    return frame, depth


def random_mesh(seed: int, height: int, width: int, params: MeshParams | None = None):
    frame, depth = random_scene(seed, height, width)
    return build_dwmesh(frame, depth, params)


def quad_mesh(z: float, half: float, color=(50, 60, 70), occluded=False, fclass=FaceClass.SURFACE):
    """Hand-built frontal square at depth z: two SURFACE triangles."""
    verts = np.array(
        [[-half, -half, z], [half, -half, z], [-half, half, z], [half, half, z]], dtype=np.float32
    )
    faces = np.array([[0, 1, 2], [1, 3, 2]], dtype=np.int32)
    n = 2
    return DWMesh(
        vertices=verts,
        faces=faces,
        face_color=np.tile(np.array(color, dtype=np.uint8), (n, 1)),
        face_occluded=np.full(n, occluded, dtype=bool),
        face_class=np.full(n, fclass, dtype=np.uint8),
        height=2,
        width=2,
    )


def merge_meshes(a: DWMesh, b: DWMesh) -> DWMesh:
    """Concatenate two hand-built meshes (face ids of b shift up)."""
    return DWMesh(
        vertices=np.vstack([a.vertices, b.vertices]),
        faces=np.vstack([a.faces, b.faces + a.n_vertices]),
        face_color=np.vstack([a.face_color, b.face_color]),
        face_occluded=np.concatenate([a.face_occluded, b.face_occluded]),
        face_class=np.concatenate([a.face_class, b.face_class]),
        height=a.height,
        width=a.width,
    )


def min_edge_distance_px(mesh, pose, intr, pixel_ij, face_ids, near=1e-3) -> float:
    """Min screen-space distance from a pixel center to the projected edges
    of the given faces (near-clipped polygons), for edge-band exclusion."""
    i, j = pixel_ij
    p = np.array([j + 0.5, i + 0.5])
    cam = world_to_camera(mesh.vertices.astype(np.float64), pose)
    best = np.inf
    for fid in face_ids:
        if fid is None or fid < 0:
            continue
        poly = cam[mesh.faces[fid]]
        if (poly[:, 2] < near).any():
            poly = _clip_polygon_near(poly, near)
            if poly.shape[0] < 3:
                continue
        uv = np.empty((poly.shape[0], 2))
        uv[:, 0] = intr.fx * poly[:, 0] / poly[:, 2] + intr.cx
        uv[:, 1] = intr.fy * poly[:, 1] / poly[:, 2] + intr.cy
        for k in range(uv.shape[0]):
            a, b = uv[k], uv[(k + 1) % uv.shape[0]]
            ab = b - a
            denom = ab @ ab
            tau = 0.0 if denom == 0 else np.clip((p - a) @ ab / denom, 0.0, 1.0)
            best = min(best, float(np.linalg.norm(p - (a + tau * ab))))
    return best


def assert_matches_oracle(mesh, pose, intr, target, oracle_fid, oracle_depth, edge_band=1e-6):
    """Every disagreement with the ray-cast oracle must sit within the edge band."""
    fid_mismatch = target.face_id != oracle_fid
    both = np.isfinite(target.depth) & np.isfinite(oracle_depth)
    with np.errstate(invalid="ignore"):
        depth_mismatch = both & (
            np.abs(target.depth - oracle_depth) > 1e-9 * np.maximum(1.0, np.abs(oracle_depth))
        )
    for i, j in np.argwhere(fid_mismatch | depth_mismatch):
        ids = {int(target.face_id[i, j]), int(oracle_fid[i, j])}
        dist = min_edge_distance_px(mesh, pose, intr, (i, j), ids)
        assert dist <= edge_band, (
            f"pixel ({i},{j}): raster face {target.face_id[i, j]} depth {target.depth[i, j]} vs "
            f"oracle {oracle_fid[i, j]} depth {oracle_depth[i, j]}, edge distance {dist}"
        )


@pytest.fixture
def small_mesh():
    return random_mesh(11, 12, 12)

"""Deterministic software rasterizer.

Z-buffered nearest-hit rendering of a DWMesh sampled at pixel centers,
flat per-face color, no lighting, no backface culling. The visibility
contest is order-independent: among all faces whose hit depth lies within
1e-9 of the per-pixel minimum, the lowest face index wins. The brute-force
ray-cast oracle in ``validate`` implements the identical rule, so the two
agree everywhere except within float noise of triangle edges.

Parallelism splits the image into horizontal bands; each band owns its
buffer slice, so the output is byte-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import CameraPose, FrameRGB, Intrinsics, MaskVideo, Trajectory, Video, world_to_camera
from .errors import EmptyMesh, LengthMismatch
from .meshing import DWMesh, FaceClass

NEAR_PLANE = 1e-3
DEPTH_TIE_EPS = 1e-9
NO_FACE = -1


@dataclass(frozen=True)
class RenderTarget:
    """One rendered view: color, visibility mask, depth and face-id buffers."""

    color: FrameRGB
    mask: np.ndarray  # (H, W) uint8, 1 = visible
    depth: np.ndarray  # (H, W) float64, +inf where no hit
    face_id: np.ndarray  # (H, W) int32, NO_FACE where no hit


def project_vertex(v, intr: Intrinsics, near: float = NEAR_PLANE):
    """Pinhole projection of one camera-space point; None when clipped.

    Returns (u, v, z) screen coordinates with z passed through; points at
    or behind the near plane are clipped.
    """
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    if z <= near:
        return None
    return (intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy, z)


def _clip_polygon_near(poly: np.ndarray, near: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a camera-space polygon against z >= near."""
    out = []
    n = poly.shape[0]
    for k in range(n):
        a = poly[k]
        b = poly[(k + 1) % n]
        a_in = a[2] >= near
        b_in = b[2] >= near
        if a_in:
            out.append(a)
        if a_in != b_in:
            s = (near - a[2]) / (b[2] - a[2])
            p = a + s * (b - a)
            p[2] = near
            out.append(p)
    return np.array(out) if out else np.empty((0, 3))


def _prepare_triangles(mesh: DWMesh, pose: CameraPose, intr: Intrinsics, near: float):
    """Transform, near-clip, and project all faces.

    Returns a list of (face_id, screen verts (k,2), plane (n, n.p0)) with
    the plane taken from the unclipped camera-space triangle so clipping
    never perturbs depth.
    """
    cam = world_to_camera(mesh.vertices.astype(np.float64), pose)
    tris = cam[mesh.faces]  # (F, 3, 3)
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    n_dot_p0 = np.einsum("ij,ij->i", normals, tris[:, 0])
    degenerate = np.all(normals == 0.0, axis=1)

    z = tris[:, :, 2]
    all_front = np.all(z >= near, axis=1)
    any_front = np.any(z >= near, axis=1)

    fx, fy, cx, cy = intr.fx, intr.fy, intr.cx, intr.cy
    prepared = []
    front_ids = np.nonzero(all_front & ~degenerate)[0]
    if front_ids.size:
        t = tris[front_ids]
        uv = np.empty((front_ids.size, 3, 2))
        uv[:, :, 0] = fx * t[:, :, 0] / t[:, :, 2] + cx
        uv[:, :, 1] = fy * t[:, :, 1] / t[:, :, 2] + cy
        for k, fid in enumerate(front_ids):
            prepared.append((int(fid), uv[k], normals[fid], n_dot_p0[fid]))
    for fid in np.nonzero(any_front & ~all_front & ~degenerate)[0]:
        poly = _clip_polygon_near(tris[fid], near)
        if poly.shape[0] < 3:
            continue
        uv = np.empty((poly.shape[0], 2))
        uv[:, 0] = fx * poly[:, 0] / poly[:, 2] + cx
        uv[:, 1] = fy * poly[:, 1] / poly[:, 2] + cy
        for k in range(1, poly.shape[0] - 1):
            prepared.append((int(fid), uv[[0, k, k + 1]], normals[fid], n_dot_p0[fid]))
    return prepared


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _raster_band(prepared, intr, row_lo, row_hi, near, far):
    """Rasterize every prepared triangle into one horizontal band.

    Two passes keep the winner rule order-independent: pass one finds the
    per-pixel minimum depth, pass two takes the lowest face index among
    faces within DEPTH_TIE_EPS of it.
    """
    width = intr.width
    rows = row_hi - row_lo
    z_min = np.full((rows, width), np.inf)
    win_id = np.full((rows, width), np.iinfo(np.int32).max, dtype=np.int64)
    win_t = np.full((rows, width), np.inf)
    far_cut = np.inf if far is None else far

    clipped = []
    for fid, uv, normal, n_dot_p0 in prepared:
        u0 = uv[:, 0].min()
        u1 = uv[:, 0].max()
        v0 = max(uv[:, 1].min(), row_lo + 0.5)
        v1 = min(uv[:, 1].max(), row_hi - 0.5)
        j0 = max(int(np.ceil(u0 - 0.5)), 0)
        j1 = min(int(np.floor(u1 - 0.5)), width - 1)
        i0 = max(int(np.ceil(v0 - 0.5)), row_lo)
        i1 = min(int(np.floor(v1 - 0.5)), row_hi - 1)
        if j0 > j1 or i0 > i1:
            continue
        px = np.arange(j0, j1 + 1, dtype=np.float64) + 0.5
        py = np.arange(i0, i1 + 1, dtype=np.float64) + 0.5
        pxg, pyg = np.meshgrid(px, py)

        (x0, y0), (x1, y1), (x2, y2) = uv
        e0 = _edge(x1, y1, x2, y2, pxg, pyg)
        e1 = _edge(x2, y2, x0, y0, pxg, pyg)
        e2 = _edge(x0, y0, x1, y1, pxg, pyg)
        covered = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
        if not covered.any():
            continue

        # Depth from the unclipped plane: t = n.p0 / n.d for the unit-z pixel ray.
        dx = (pxg - intr.cx) / intr.fx
        dy = (pyg - intr.cy) / intr.fy
        n_dot_d = normal[0] * dx + normal[1] * dy + normal[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = n_dot_p0 / n_dot_d
        ok = covered & (n_dot_d != 0.0) & (t >= near) & (t <= far_cut)
        if not ok.any():
            continue
        clipped.append((fid, i0 - row_lo, j0, ok, t))
        sl = (slice(i0 - row_lo, i1 + 1 - row_lo), slice(j0, j1 + 1))
        np.minimum(z_min[sl], np.where(ok, t, np.inf), out=z_min[sl])

    for fid, r0, c0, ok, t in clipped:
        rr, cc = ok.shape
        sl = (slice(r0, r0 + rr), slice(c0, c0 + cc))
        take = ok & (t <= z_min[sl] + DEPTH_TIE_EPS) & (fid < win_id[sl])
        if take.any():
            win_id[sl] = np.where(take, fid, win_id[sl])
            win_t[sl] = np.where(take, t, win_t[sl])

    no_hit = win_id == np.iinfo(np.int32).max
    face_id = np.where(no_hit, NO_FACE, win_id).astype(np.int32)
    depth = np.where(no_hit, np.inf, win_t)
    return face_id, depth


def rasterize(
    mesh: DWMesh,
    pose: CameraPose,
    intr: Intrinsics,
    threads: int = 1,
    near: float = NEAR_PLANE,
    far: float | None = None,
) -> RenderTarget:
    """Render one view of a mesh into color/mask/depth/face-id buffers."""
    if mesh.n_faces == 0:
        raise EmptyMesh("mesh has no faces")
    height, width = intr.height, intr.width
    prepared = _prepare_triangles(mesh, pose, intr, near)

    bands = min(max(int(threads), 1), height)
    bounds = np.linspace(0, height, bands + 1, dtype=int)
    jobs = [(int(bounds[b]), int(bounds[b + 1])) for b in range(bands) if bounds[b] < bounds[b + 1]]
    if len(jobs) <= 1:
        results = [_raster_band(prepared, intr, lo, hi, near, far) for lo, hi in jobs]
    else:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(lambda lh: _raster_band(prepared, intr, lh[0], lh[1], near, far), jobs))
    face_id = np.concatenate([r[0] for r in results], axis=0)
    depth = np.concatenate([r[1] for r in results], axis=0)

    hit = face_id != NO_FACE
    visible = np.zeros((height, width), dtype=bool)
    fid = face_id[hit]
    visible[hit] = (mesh.face_class[fid] == FaceClass.SURFACE) & ~mesh.face_occluded[fid]
    color = np.zeros((height, width, 3), dtype=np.uint8)
    color[visible] = mesh.face_color[face_id[visible]]
    return RenderTarget(
        color=FrameRGB(color),
        mask=visible.astype(np.uint8),
        depth=depth,
        face_id=face_id,
    )


def render_trajectory(
    meshes, traj: Trajectory, threads: int = 1, near: float = NEAR_PLANE, far: float | None = None
) -> tuple[Video, MaskVideo]:
    """Render frame t of the trajectory from mesh t (or a single shared mesh)."""
    meshes = list(meshes)
    n = len(traj)
    if len(meshes) != n and len(meshes) != 1:
        raise LengthMismatch(f"{len(meshes)} meshes for {n} poses (need equal counts or a single mesh)")
    frames = []
    masks = np.zeros((n, traj.intrinsics.height, traj.intrinsics.width), dtype=np.uint8)
    for t in range(n):
        mesh = meshes[0] if len(meshes) == 1 else meshes[t]
        target = rasterize(mesh, traj.poses[t], traj.intrinsics, threads=threads, near=near, far=far)
        frames.append(target.color)
        masks[t] = target.mask
    return Video(tuple(frames)), MaskVideo(masks)

"""Independent oracles: brute-force ray casting, watertight parity, identity render.

Everything here deliberately avoids the rasterizer's code paths. The
ray-cast reference intersects every face with Moller-Trumbore and applies
the same order-independent tie rule (within 1e-9 of the nearest hit, the
lowest face index wins), which is what makes pixel-exact cross-checking
possible.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .core import CameraPose, FrameRGB, Intrinsics, world_to_camera
from .meshing import DWMesh, FaceClass
from .raster import DEPTH_TIE_EPS, NEAR_PLANE, NO_FACE, rasterize
from .rng import Rng

EDGE_GRAZE_EPS = 1e-9


@dataclass
class ValidationReport:
    """Summary emitted by the validate CLI subcommand."""

    counts_ok: bool
    ray_parity_fraction: float
    identity_render_mean_error: float | None
    identity_render_max_error: float | None
    occluded_face_fraction: float
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)


def _moller_trumbore(origins: np.ndarray, dirs: np.ndarray, tri: np.ndarray):
    """Batched ray-triangle intersection, component-wise to limit temporaries.

    origins/dirs: (R, 3); tri: (F, 3, 3). Returns (t, u, v, hit) arrays of
    shape (R, F), where hit applies the closed boundary convention
    (u, v, 1-u-v >= 0) and rejects only exactly-parallel rays.
    """
    a = tri[:, 0]
    e1 = tri[:, 1] - a
    e2 = tri[:, 2] - a
    dx, dy, dz = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
    e1x, e1y, e1z = e1[:, 0][None], e1[:, 1][None], e1[:, 2][None]
    e2x, e2y, e2z = e2[:, 0][None], e2[:, 1][None], e2[:, 2][None]
    # p = dir x e2, accumulated in place; shapes broadcast to (R, F)
    px = dy * e2z
    px -= dz * e2y
    py = dz * e2x
    py -= dx * e2z
    pz = dx * e2y
    pz -= dy * e2x
    det = e1x * px
    det += e1y * py
    det += e1z * pz
    sx = origins[:, 0:1] - a[:, 0][None]
    sy = origins[:, 1:2] - a[:, 1][None]
    sz = origins[:, 2:3] - a[:, 2][None]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        u = px
        u *= sx
        u += sy * py
        u += sz * pz
        u *= inv
        qx = sy * e1z  # q = s x e1
        qx -= sz * e1y
        qy = sz * e1x
        qy -= sx * e1z
        qz = sx * e1y
        qz -= sy * e1x
        v = dx * qx
        v += dy * qy
        v += dz * qz
        v *= inv
        t = e2x * qx
        t += e2y * qy
        t += e2z * qz
        t *= inv
    ok = det != 0.0
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    return t, u, v, hit


def _pixel_dirs(intr: Intrinsics, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Unit-z rays through the given pixel centers, (N, 3)."""
    dirs = np.empty((rows.size, 3))
    dirs[:, 0] = (cols + 0.5 - intr.cx) / intr.fx
    dirs[:, 1] = (rows + 0.5 - intr.cy) / intr.fy
    dirs[:, 2] = 1.0
    return dirs


def raycast_buffers(
    mesh: DWMesh,
    pose: CameraPose,
    intr: Intrinsics,
    near: float = NEAR_PLANE,
    far: float | None = None,
    row_chunk: int = 8,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force face-id and depth buffers for a full view.

    Row chunks own disjoint output slices, so worker count never changes
    the result.
    """
    cam = world_to_camera(mesh.vertices.astype(np.float64), pose)
    tri = cam[mesh.faces]
    height, width = intr.height, intr.width
    far_cut = np.inf if far is None else far
    face_id = np.full((height, width), NO_FACE, dtype=np.int32)
    depth = np.full((height, width), np.inf)

    def one_chunk(r0: int) -> None:
        r1 = min(r0 + row_chunk, height)
        rows, cols = np.mgrid[r0:r1, 0:width]
        dirs = _pixel_dirs(intr, rows.ravel().astype(np.float64), cols.ravel().astype(np.float64))
        origins = np.zeros_like(dirs)
        t, _, _, hit = _moller_trumbore(origins, dirs, tri)
        valid = hit & (t >= near) & (t <= far_cut)
        t_masked = np.where(valid, t, np.inf)
        t_min = t_masked.min(axis=1)
        candidates = valid & (t_masked <= t_min[:, None] + DEPTH_TIE_EPS)
        any_hit = candidates.any(axis=1)
        winner = np.where(any_hit, candidates.argmax(axis=1), NO_FACE)
        t_win = np.where(any_hit, t_masked[np.arange(t.shape[0]), winner], np.inf)
        face_id[r0:r1] = winner.reshape(r1 - r0, width).astype(np.int32)
        depth[r0:r1] = t_win.reshape(r1 - r0, width)

    starts = range(0, height, row_chunk)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one_chunk, starts))
    else:
        for r0 in starts:
            one_chunk(r0)
    return face_id, depth


def raycast_reference(
    mesh: DWMesh,
    pose: CameraPose,
    intr: Intrinsics,
    pixel: tuple[int, int],
    near: float = NEAR_PLANE,
    far: float | None = None,
) -> tuple[int | None, float]:
    """Nearest face and depth for one pixel (row, col); (None, inf) on miss."""
    cam = world_to_camera(mesh.vertices.astype(np.float64), pose)
    tri = cam[mesh.faces]
    i, j = pixel
    dirs = _pixel_dirs(intr, np.array([float(i)]), np.array([float(j)]))
    t, _, _, hit = _moller_trumbore(np.zeros((1, 3)), dirs, tri)
    far_cut = np.inf if far is None else far
    valid = hit[0] & (t[0] >= near) & (t[0] <= far_cut)
    if not valid.any():
        return None, np.inf
    t_masked = np.where(valid, t[0], np.inf)
    t_min = t_masked.min()
    winner = int(np.nonzero(t_masked <= t_min + DEPTH_TIE_EPS)[0][0])
    return winner, float(t_masked[winner])


def ray_parity_check(
    mesh: DWMesh, n_rays: int = 10_000, seed: int = 0, ray_chunk: int = 512, threads: int = 1
) -> float:
    """Fraction of outside-origin rays crossing the mesh an even number of times.

    Rays start outside the bounding sphere and aim at random points inside
    the bounding box. Rays grazing within 1e-9 of any triangle edge (in
    barycentric terms) are excluded from the fraction rather than counted.
    Chunks of rays may run on worker threads; per-ray results are pure, so
    the fraction is identical for any worker count.
    """
    verts = mesh.vertices.astype(np.float64)
    tri = verts[mesh.faces]
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    center = (lo + hi) / 2.0
    radius = float(np.linalg.norm(hi - center))
    rng = Rng(seed)

    origins = np.empty((n_rays, 3))
    targets = np.empty((n_rays, 3))
    for k in range(n_rays):
        # Uniform direction via rejection sampling from the unit ball.
        while True:
            d = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)])
            norm = np.linalg.norm(d)
            if 1e-6 < norm <= 1.0:
                break
        origins[k] = center + (d / norm) * (2.5 * radius + 1.0)
        targets[k] = [rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(lo[2], hi[2])]
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def count_chunk(c0: int) -> tuple[int, int]:
        c1 = min(c0 + ray_chunk, n_rays)
        t, u, v, hit = _moller_trumbore(origins[c0:c1], dirs[c0:c1], tri)
        min_bary = np.minimum(np.minimum(u, v), 1.0 - u - v)
        near_edge = ((min_bary < EDGE_GRAZE_EPS) & (min_bary > -EDGE_GRAZE_EPS)) | (
            hit & (np.abs(t) < EDGE_GRAZE_EPS)
        )
        strict = hit & (t > EDGE_GRAZE_EPS) & (min_bary > EDGE_GRAZE_EPS)
        keep = ~(near_edge.any(axis=1))
        counts = strict.sum(axis=1)
        return int(keep.sum()), int((keep & (counts % 2 == 0)).sum())

    starts = range(0, n_rays, ray_chunk)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(count_chunk, starts))
    else:
        results = [count_chunk(c0) for c0 in starts]
    counted = sum(r[0] for r in results)
    even = sum(r[1] for r in results)
    if counted == 0:
        return 0.0
    return even / counted


def identity_render_check(mesh: DWMesh, frame: FrameRGB, intr: Intrinsics | None = None) -> dict:
    """Round-trip check: canonical render vs the input frame's cell anchors.

    Considers pixels whose own cell is entirely SURFACE with O=0 and whose
    rendered mask is 1; reports mean/max absolute channel error against the
    cell-anchor color. Stats are None when no pixel qualifies.
    """
    intr = intr or _canonical_for(mesh)
    target = rasterize(mesh, CameraPose.identity(), intr)
    h, w = mesh.height, mesh.width

    cell_i = np.minimum(np.arange(h), h - 2)
    cell_j = np.minimum(np.arange(w), w - 2)
    cells = cell_i[:, None] * (w - 1) + cell_j[None, :]
    f1 = (2 * cells).astype(np.int64)
    f2 = f1 + 1
    cell_clean = (
        (mesh.face_class[f1] == FaceClass.SURFACE)
        & (mesh.face_class[f2] == FaceClass.SURFACE)
        & ~mesh.face_occluded[f1]
        & ~mesh.face_occluded[f2]
    )
    eligible = cell_clean & (target.mask == 1)
    if not eligible.any():
        return {"mean_abs_error": None, "max_abs_error": None, "n_pixels": 0}

    anchors = frame.pixels[cell_i[:, None], cell_j[None, :]].astype(np.int64)
    err = np.abs(target.color.pixels.astype(np.int64) - anchors)[eligible]
    return {
        "mean_abs_error": float(err.mean()),
        "max_abs_error": float(err.max()),
        "n_pixels": int(eligible.sum()),
    }


def _canonical_for(mesh: DWMesh) -> Intrinsics:
    return Intrinsics.canonical(mesh.width, mesh.height)


def run_validation(
    mesh: DWMesh,
    frame: FrameRGB | None = None,
    n_rays: int = 10_000,
    seed: int = 0,
    parity_threshold: float = 0.999,
) -> ValidationReport:
    """Full validation sweep over one mesh (and optionally its source frame)."""
    notes = []
    h, w = mesh.height, mesh.width
    counts_ok = mesh.n_vertices == h * w and mesh.n_faces == 2 * (h - 1) * (w - 1) + 2
    try:
        mesh.validate()
    except Exception as exc:  # noqa: BLE001 - collected into the report
        counts_ok = False
        notes.append(str(exc))

    parity = ray_parity_check(mesh, n_rays=n_rays, seed=seed)
    if parity < parity_threshold:
        notes.append(f"ray parity {parity:.4f} below threshold {parity_threshold}")

    mean_err = max_err = None
    if frame is not None:
        stats = identity_render_check(mesh, frame)
        mean_err = stats["mean_abs_error"]
        max_err = stats["max_abs_error"]
        if stats["n_pixels"] == 0:
            notes.append("identity render check vacuous: no eligible pixels")

    return ValidationReport(
        counts_ok=counts_ok,
        ray_parity_fraction=parity,
        identity_render_mean_error=mean_err,
        identity_render_max_error=max_err,
        occluded_face_fraction=float(mesh.face_occluded.mean()),
        notes=notes,
    )

"""Training-pair synthesis: rendering masks, tracking masks, crop augmentation.

Rendering masks come from meshing each frame, pairing cell occlusion bits,
and rasterizing along a trajectory: anything occluded, skirt, cap, or
unhit is invisible, and the invisible region is morphologically dilated to
swallow isolated depth-noise pixels. Tracking masks paint temporally
persistent invisible rectangles that follow point tracks. All randomness
is SplitMix64-seeded and drawn in a deterministic pre-pass, so results are
pure functions of (inputs, seed) regardless of worker count.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import DepthMap, FrameRGB, MaskVideo, Trajectory, Video
from .errors import InvariantViolation, LengthMismatch, NonMonotoneTrack, OutOfBoundsTrack
from .meshing import DWMesh, MeshParams, build_dwmesh, delta_depth_threshold
from .raster import rasterize
from .rng import Rng

DEFAULT_DILATION_KERNEL = 5
DEFAULT_GRID_BOUNDS = (10, 50)
DEFAULT_OCCLUDER_FRACTION = 0.3
DEFAULT_CROP_BOUNDS = (0.85, 0.95)


@dataclass(frozen=True)
class PointTrack:
    """One tracked point: per-frame samples with visibility flags."""

    id: int
    frames: np.ndarray  # (n,) int64, strictly increasing
    xs: np.ndarray  # (n,) float64, pixel x
    ys: np.ndarray  # (n,) float64, pixel y
    visible: np.ndarray  # (n,) bool

    def __post_init__(self):
        for name, dtype in (("frames", np.int64), ("xs", np.float64), ("ys", np.float64), ("visible", bool)):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.frames) == len(self.xs) == len(self.ys) == len(self.visible)):
            raise InvariantViolation("track sample arrays must have equal length")
        if len(self.frames) > 1 and not np.all(np.diff(self.frames) > 0):
            raise NonMonotoneTrack(f"track {self.id}: frame indices must strictly increase")


@dataclass(frozen=True)
class MaskGenParams:
    """Knobs for mask synthesis and augmentation."""

    dilation_kernel: int = DEFAULT_DILATION_KERNEL
    grid_bounds: tuple[int, int] = DEFAULT_GRID_BOUNDS
    occluder_fraction: float = DEFAULT_OCCLUDER_FRACTION
    occluder_half_extent: int | None = None  # None: 5% of min(H, W)
    crop_bounds: tuple[float, float] = DEFAULT_CROP_BOUNDS
    seed: int = 0

    def __post_init__(self):
        if self.dilation_kernel < 1 or self.dilation_kernel % 2 == 0:
            raise InvariantViolation("dilation kernel must be odd and >= 1")
        if self.grid_bounds[0] > self.grid_bounds[1]:
            raise InvariantViolation("grid point bounds must be ordered")
        if not (0.0 <= self.occluder_fraction <= 1.0):
            raise InvariantViolation("occluder fraction must lie in [0, 1]")
        if not (0.0 < self.crop_bounds[0] <= self.crop_bounds[1] <= 1.0):
            raise InvariantViolation("crop bounds must satisfy 0 < lo <= hi <= 1")


def half_extent_for(params: MaskGenParams, height: int, width: int) -> int:
    if params.occluder_half_extent is not None:
        return params.occluder_half_extent
    return int(round(0.05 * min(height, width)))


def pair_cell_occlusion(mesh: DWMesh) -> DWMesh:
    """Force both triangles of every cell to share one occlusion bit (OR).

    Newly occluded faces turn black; cap faces are already occluded and
    stay untouched.
    """
    occ = np.array(mesh.face_occluded)
    n_grid = mesh.n_grid_faces
    paired = occ[0:n_grid:2] | occ[1:n_grid:2]
    occ[0:n_grid:2] = paired
    occ[1:n_grid:2] = paired
    colors = np.array(mesh.face_color)
    colors[occ] = 0
    return DWMesh(
        vertices=mesh.vertices,
        faces=mesh.faces,
        face_color=colors,
        face_occluded=occ,
        face_class=mesh.face_class,
        height=mesh.height,
        width=mesh.width,
    )


def dilate_invisible(mask: np.ndarray, kernel: int = DEFAULT_DILATION_KERNEL) -> np.ndarray:
    """Grow the invisible (0) region by a kernel x kernel neighborhood.

    A pixel ends up invisible iff any input pixel in its clipped k x k
    neighborhood was invisible; isolated visible noise pixels disappear.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise InvariantViolation("dilation kernel must be odd and >= 1")
    invisible = np.asarray(mask) == 0
    grown = ndimage.binary_dilation(invisible, structure=np.ones((kernel, kernel), dtype=bool))
    return (~grown).astype(np.uint8)


def apply_mask(video: Video, masks: MaskVideo) -> Video:
    """Pixelwise: keep the frame where the mask is 1, black elsewhere."""
    if len(video) != len(masks):
        raise LengthMismatch(f"{len(video)} frames vs {len(masks)} masks")
    if len(video) and (video.height, video.width) != (masks.height, masks.width):
        raise LengthMismatch("video and mask dimensions differ")
    out = []
    for t in range(len(video)):
        out.append(FrameRGB(video[t].pixels * masks[t][:, :, None]))
    return Video(tuple(out))


def gen_rendering_masks(
    video: Video,
    depths: list[DepthMap],
    traj: Trajectory,
    mesh_params: MeshParams | None = None,
    params: MaskGenParams | None = None,
    threads: int = 1,
) -> tuple[Video, MaskVideo]:
    """Simulated novel-view training pair from a monocular clip.

    Per frame: mesh, pair cell occlusion, rasterize under the target pose,
    dilate the invisible region, then mask the *original* frame. The
    rendered color buffer plays no part here; it belongs to inference.
    """
    mesh_params = mesh_params or MeshParams()
    params = params or MaskGenParams()
    n = len(traj)
    if len(video) != len(depths) or len(video) != n:
        raise LengthMismatch(f"{len(video)} frames, {len(depths)} depths, {n} poses")
    if n == 0:
        return Video(()), MaskVideo(np.zeros((0, 0, 0), dtype=np.uint8))

    if mesh_params.delta_depth is None:
        # Threshold pinned from the first frame's depth range for the whole clip.
        fixed = delta_depth_threshold(depths[0], mesh_params.delta_depth_coeff)
        mesh_params = dataclasses.replace(mesh_params, delta_depth=fixed)

    def one_frame(t: int) -> np.ndarray:
        mesh = pair_cell_occlusion(build_dwmesh(video[t], depths[t], mesh_params))
        target = rasterize(
            mesh, traj.poses[t], traj.intrinsics, threads=1, far=2.0 * mesh_params.d_max
        )
        return dilate_invisible(target.mask, params.dilation_kernel)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            mask_frames = list(pool.map(one_frame, range(n)))
    else:
        mask_frames = [one_frame(t) for t in range(n)]
    mask_video = MaskVideo(np.stack(mask_frames))
    return apply_mask(video, mask_video), mask_video


def sample_point_grid(
    height: int, width: int, seed: int, bounds: tuple[int, int] = DEFAULT_GRID_BOUNDS
) -> np.ndarray:
    """Jittered regular grid of 10-50 points, (n, 2) float64 (x, y)."""
    rng = Rng(seed)
    n = rng.randint(bounds[0], bounds[1])
    cols = max(1, int(np.ceil(np.sqrt(n * width / height))))
    rows = int(np.ceil(n / cols))
    cell_h = height / rows
    cell_w = width / cols
    points = np.empty((n, 2))
    for k in range(n):
        r, c = divmod(k, cols)
        points[k, 0] = (c + rng.uniform()) * cell_w
        points[k, 1] = (r + rng.uniform()) * cell_h
    return np.clip(points, 0.0, [np.nextafter(width, 0.0), np.nextafter(height, 0.0)])


def _track_position_at(track: PointTrack, t: int) -> tuple[float, float] | None:
    """Last visible position at or before frame t, else the first visible one."""
    vis = np.nonzero(track.visible)[0]
    if vis.size == 0:
        return None
    before = vis[track.frames[vis] <= t]
    k = int(before[-1]) if before.size else int(vis[0])
    return float(track.xs[k]), float(track.ys[k])


def gen_tracking_masks(
    tracks: list[PointTrack], length: int, height: int, width: int, params: MaskGenParams | None = None
) -> MaskVideo:
    """Persistent invisible rectangles riding a seeded subset of tracks.

    Each selected occluder activates at a seeded start frame; from then on
    the rectangle around the track's current (or last known) position is
    invisible, never releasing earlier frames.
    """
    params = params or MaskGenParams()
    for track in tracks:
        vx, vy = track.xs[track.visible], track.ys[track.visible]
        if vx.size and (vx.min() < 0 or vx.max() >= width or vy.min() < 0 or vy.max() >= height):
            raise OutOfBoundsTrack(f"track {track.id} has visible samples outside {width}x{height}")

    rng = Rng(params.seed)
    occluders = []  # (track, start frame), drawn in one pre-pass
    for track in tracks:
        if rng.uniform() < params.occluder_fraction:
            occluders.append((track, rng.randint(0, max(length - 1, 0))))

    h = half_extent_for(params, height, width)
    frames = np.ones((length, height, width), dtype=np.uint8)
    for track, t0 in occluders:
        for t in range(t0, length):
            pos = _track_position_at(track, t)
            if pos is None:
                continue
            cx, cy = int(round(pos[0])), int(round(pos[1]))
            r0, r1 = max(cy - h, 0), min(cy + h, height - 1)
            c0, c1 = max(cx - h, 0), min(cx + h, width - 1)
            if r0 <= r1 and c0 <= c1:
                frames[t, r0 : r1 + 1, c0 : c1 + 1] = 0
    return MaskVideo(frames)


def _bezier(p: np.ndarray, u: float) -> np.ndarray:
    """Cubic Bezier through four (2,) control points."""
    w = 1.0 - u
    return w**3 * p[0] + 3 * w**2 * u * p[1] + 3 * w * u**2 * p[2] + u**3 * p[3]


def _bilinear_crop_float(values: np.ndarray, x0: float, y0: float, sw: float, sh: float) -> np.ndarray:
    """Bilinear resample of the window at (x0, y0), size (sw, sh), to full res."""
    h, w = values.shape[:2]
    xs = x0 + (np.arange(w) + 0.5) * sw / w - 0.5
    ys = y0 + (np.arange(h) + 0.5) * sh / h - 0.5
    x0i = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y0i = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    fx = np.clip(xs - x0i, 0.0, 1.0)[None, :]
    fy = np.clip(ys - y0i, 0.0, 1.0)[:, None]
    if values.ndim == 3:
        fx = fx[:, :, None]
        fy = fy[:, :, None]
    img = values.astype(np.float64)
    top = img[y0i[:, None], x0i[None, :]] * (1 - fx) + img[y0i[:, None], x1i[None, :]] * fx
    bot = img[y1i[:, None], x0i[None, :]] * (1 - fx) + img[y1i[:, None], x1i[None, :]] * fx
    return top * (1 - fy) + bot * fy


def _bilinear_crop(pixels: np.ndarray, x0: float, y0: float, sw: float, sh: float) -> np.ndarray:
    out = _bilinear_crop_float(pixels, x0, y0, sw, sh)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def crop_path(seed: int, params: MaskGenParams, n_frames: int, height: int, width: int):
    """Seeded crop fraction and window centers: one eased cubic Bezier per clip.

    The four control points are confined to the region where the window
    stays in-frame, so the whole convex-hull-bound curve does too.
    Returns (window height, window width, (n, 2) centers as (x, y)).
    """
    rng = Rng(seed)
    s = rng.uniform(params.crop_bounds[0], params.crop_bounds[1])
    sh, sw = s * height, s * width
    cx_lo, cx_hi = sw / 2.0, width - sw / 2.0
    cy_lo, cy_hi = sh / 2.0, height - sh / 2.0
    control = np.empty((4, 2))
    for k in range(4):
        control[k, 0] = rng.uniform(cx_lo, cx_hi) if cx_hi > cx_lo else cx_lo
        control[k, 1] = rng.uniform(cy_lo, cy_hi) if cy_hi > cy_lo else cy_lo
    centers = np.empty((n_frames, 2))
    for t in range(n_frames):
        tau = 0.0 if n_frames == 1 else t / (n_frames - 1)
        u = 3.0 * tau * tau - 2.0 * tau * tau * tau
        centers[t] = _bezier(control, u)
    return sh, sw, centers


def smooth_crop_augment(video: Video, seed: int, params: MaskGenParams | None = None) -> Video:
    """Seeded smooth crop resampled back to the original resolution."""
    params = params or MaskGenParams()
    if len(video) == 0:
        return video
    h, w = video.height, video.width
    sh, sw, centers = crop_path(seed, params, len(video), h, w)
    out = []
    for t in range(len(video)):
        cx, cy = centers[t]
        out.append(FrameRGB(_bilinear_crop(video[t].pixels, cx - sw / 2.0, cy - sh / 2.0, sw, sh)))
    return Video(tuple(out))


def crop_augment_scene(
    video: Video, depths: list[DepthMap], seed: int, params: MaskGenParams | None = None
) -> tuple[Video, list[DepthMap]]:
    """Crop frames and depth maps with one shared seeded window path.

    Cropping before meshing keeps the color/depth pairing intact; depth
    values resample bilinearly and re-derive their extrema as a fresh
    source signal.
    """
    params = params or MaskGenParams()
    if len(video) != len(depths):
        raise LengthMismatch(f"{len(video)} frames vs {len(depths)} depth maps")
    if len(video) == 0:
        return video, []
    h, w = video.height, video.width
    sh, sw, centers = crop_path(seed, params, len(video), h, w)
    frames = []
    cropped_depths = []
    for t in range(len(video)):
        x0, y0 = centers[t, 0] - sw / 2.0, centers[t, 1] - sh / 2.0
        frames.append(FrameRGB(_bilinear_crop(video[t].pixels, x0, y0, sw, sh)))
        cropped_depths.append(DepthMap.from_values(_bilinear_crop_float(depths[t].values, x0, y0, sw, sh)))
    return Video(tuple(frames)), cropped_depths

"""Readers and writers for every external artifact.

All multi-byte binary fields are little-endian. Every writer/reader pair
roundtrips losslessly on valid data, and readers re-validate type
invariants instead of constructing broken values.

Formats:
  - depth: PFM (grayscale ``Pf``, rows bottom-to-top, float32) or 16-bit
    PNG plus a JSON sidecar carrying the depth range;
  - masks: 8-bit grayscale PNGs, 0 = invisible / 255 = visible;
  - meshes: binary little-endian PLY with per-face color, occlusion and
    class bytes; a ``comment grid H W`` header line records the source
    grid so the mesh can be reconstructed exactly;
  - tracks: JSONL, one sample per line;
  - trajectories: JSON with intrinsics and 4x4 row-major world-to-camera
    matrices.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import CameraPose, DepthMap, FrameRGB, Intrinsics, MaskVideo, Trajectory, Video
from .errors import (
    InvariantViolation,
    NonMonotoneTrack,
    NonOrthonormalPose,
    NonPositiveDepth,
    OutOfBoundsTrack,
    ParseError,
)
from .masks import PointTrack
from .meshing import DWMesh


# ---------------------------------------------------------------------------
# depth maps
# ---------------------------------------------------------------------------

def write_pfm(depth: DepthMap, path) -> Path:
    """Grayscale PFM, little-endian (negative scale), rows bottom-to-top."""
    path = Path(path)
    values = depth.values.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{depth.width} {depth.height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(values[::-1].tobytes())
    return path

def read_pfm(path) -> DepthMap:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise ParseError(f"{path}: expected grayscale PFM header 'Pf', got {header!r}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ParseError(f"{path}: malformed dimensions line")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise ParseError(f"{path}: malformed header: {exc}") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        data = fh.read(width * height * 4)
        if len(data) != width * height * 4:
            raise ParseError(f"{path}: truncated pixel data")
    values = np.frombuffer(data, dtype=dtype).reshape(height, width)[::-1].astype(np.float64)
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise NonPositiveDepth(f"{path}: depth values must be finite and positive")
    return DepthMap.from_values(values)


def write_depth_png16(depth: DepthMap, path) -> Path:
    """16-bit PNG with JSON sidecar {"d_min", "d_max"} defining the range."""
    path = Path(path)
    span = depth.d_max - depth.d_min
    norm = (depth.values - depth.d_min) / span if span > 0 else np.zeros_like(depth.values)
    raw = np.round(norm * 65535.0).astype(np.uint16)
    Image.fromarray(raw).save(path)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"d_min": depth.d_min, "d_max": depth.d_max}))
    return path


def read_depth_png16(path) -> DepthMap:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise ParseError(f"{path}: missing range sidecar {sidecar.name}")
    try:
        meta = json.loads(sidecar.read_text())
        d_min, d_max = float(meta["d_min"]), float(meta["d_max"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{sidecar}: malformed sidecar: {exc}") from exc
    raw = np.asarray(Image.open(path), dtype=np.float64)
    if raw.ndim != 2:
        raise ParseError(f"{path}: expected single-channel 16-bit PNG")
    values = d_min + raw / 65535.0 * (d_max - d_min)
    if np.any(values <= 0.0):
        raise NonPositiveDepth(f"{path}: decoded depths must be positive (d_min={d_min})")
    return DepthMap.from_values(values)


def read_depth(path) -> DepthMap:
    """Dispatch on extension: .pfm or 16-bit .png with sidecar."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    if path.suffix.lower() == ".png":
        return read_depth_png16(path)
    raise ParseError(f"{path}: unsupported depth format (use .pfm or .png)")


# ---------------------------------------------------------------------------
# image / mask sequences
# ---------------------------------------------------------------------------

def write_mask_sequence(masks: MaskVideo, out_dir) -> list[Path]:
    """mask_%05d.png, 8-bit grayscale, 0 = invisible / 255 = visible."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(len(masks)):
        p = out_dir / f"mask_{t:05d}.png"
        Image.fromarray((masks[t] * 255).astype(np.uint8), mode="L").save(p)
        paths.append(p)
    return paths


def read_mask_sequence(in_dir) -> MaskVideo:
    in_dir = Path(in_dir)
    paths = sorted(in_dir.glob("mask_*.png"))
    if not paths:
        raise ParseError(f"{in_dir}: no mask_*.png files")
    frames = []
    for p in paths:
        arr = np.asarray(Image.open(p))
        if arr.ndim != 2:
            raise ParseError(f"{p}: masks must be single-channel")
        if not np.isin(arr, (0, 255)).all():
            raise ParseError(f"{p}: mask values must be 0 or 255")
        frames.append((arr == 255).astype(np.uint8))
    return MaskVideo(np.stack(frames))


def write_color_sequence(video: Video, out_dir, prefix: str = "color") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(len(video)):
        p = out_dir / f"{prefix}_{t:05d}.png"
        Image.fromarray(video[t].pixels, mode="RGB").save(p)
        paths.append(p)
    return paths


def read_color_sequence(in_dir, prefix: str = "color") -> Video:
    in_dir = Path(in_dir)
    paths = sorted(in_dir.glob(f"{prefix}_*.png"))
    if not paths:
        raise ParseError(f"{in_dir}: no {prefix}_*.png files")
    return Video(tuple(FrameRGB(np.asarray(Image.open(p).convert("RGB"))) for p in paths))


def read_frame_dir(in_dir) -> Video:
    """All PNGs in a directory, sorted by name, as a video."""
    in_dir = Path(in_dir)
    paths = sorted(in_dir.glob("*.png"))
    if not paths:
        raise ParseError(f"{in_dir}: no .png frames")
    return Video(tuple(FrameRGB(np.asarray(Image.open(p).convert("RGB"))) for p in paths))


def read_depth_dir(in_dir) -> list[DepthMap]:
    """All depth files (.pfm or 16-bit .png) in a directory, sorted by name."""
    in_dir = Path(in_dir)
    paths = sorted([*in_dir.glob("*.pfm"), *in_dir.glob("*.png")])
    if not paths:
        raise ParseError(f"{in_dir}: no depth files (.pfm or .png)")
    return [read_depth(p) for p in paths]


# ---------------------------------------------------------------------------
# meshes (PLY)
# ---------------------------------------------------------------------------

_PLY_FACE_STRUCT = struct.Struct("<B3i5B")


def write_ply(mesh: DWMesh, path) -> Path:
    """Binary little-endian PLY with per-face color/occlusion/class bytes."""
    path = Path(path)
    n_v, n_f = mesh.n_vertices, mesh.n_faces
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"comment grid {mesh.height} {mesh.width}\n"
        f"element vertex {n_v}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        f"element face {n_f}\n"
        "property list uchar int vertex_indices\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "property uchar occluded\n"
        "property uchar fclass\n"
        "end_header\n"
    )
    face_records = np.empty(
        n_f,
        dtype=np.dtype(
            [
                ("n", "u1"),
                ("idx", "<i4", (3,)),
                ("rgb", "u1", (3,)),
                ("occ", "u1"),
                ("cls", "u1"),
            ]
        ),
    )
    face_records["n"] = 3
    face_records["idx"] = mesh.faces
    face_records["rgb"] = mesh.face_color
    face_records["occ"] = mesh.face_occluded.astype(np.uint8)
    face_records["cls"] = mesh.face_class
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mesh.vertices.astype("<f4").tobytes())
        fh.write(face_records.tobytes())
    return path


def read_ply(path) -> DWMesh:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ParseError(f"{path}: not a PLY file")
        n_v = n_f = None
        grid = None
        fmt_ok = False
        while True:
            line = fh.readline()
            if not line:
                raise ParseError(f"{path}: header without end_header")
            parts = line.split()
            if not parts:
                continue
            if parts[0] == b"format":
                fmt_ok = parts[1] == b"binary_little_endian"
            elif parts[0] == b"comment" and len(parts) == 4 and parts[1] == b"grid":
                grid = (int(parts[2]), int(parts[3]))
            elif parts[0] == b"element":
                if parts[1] == b"vertex":
                    n_v = int(parts[2])
                elif parts[1] == b"face":
                    n_f = int(parts[2])
            elif parts[0] == b"end_header":
                break
        if not fmt_ok:
            raise ParseError(f"{path}: expected binary_little_endian format")
        if n_v is None or n_f is None:
            raise ParseError(f"{path}: missing vertex/face elements")
        if grid is None:
            raise ParseError(f"{path}: missing 'comment grid H W' line")
        vert_bytes = fh.read(n_v * 12)
        if len(vert_bytes) != n_v * 12:
            raise ParseError(f"{path}: truncated vertex data")
        vertices = np.frombuffer(vert_bytes, dtype="<f4").reshape(n_v, 3)
        face_bytes = fh.read(n_f * _PLY_FACE_STRUCT.size)
        if len(face_bytes) != n_f * _PLY_FACE_STRUCT.size:
            raise ParseError(f"{path}: truncated face data")
    records = np.frombuffer(
        face_bytes,
        dtype=np.dtype(
            [
                ("n", "u1"),
                ("idx", "<i4", (3,)),
                ("rgb", "u1", (3,)),
                ("occ", "u1"),
                ("cls", "u1"),
            ]
        ),
    )
    if not np.all(records["n"] == 3):
        raise ParseError(f"{path}: non-triangle face record")
    mesh = DWMesh(
        vertices=vertices,
        faces=records["idx"],
        face_color=records["rgb"],
        face_occluded=records["occ"].astype(bool),
        face_class=records["cls"],
        height=grid[0],
        width=grid[1],
    )
    mesh.validate()
    return mesh


# ---------------------------------------------------------------------------
# point tracks (JSONL)
# ---------------------------------------------------------------------------

def read_tracks(path, width: int | None = None, height: int | None = None) -> list[PointTrack]:
    """Group JSONL samples by id, sort by frame, enforce strict monotonicity.

    Bounds are checked only when frame dims are supplied; the mask
    generator re-checks them against its own dims regardless.
    """
    path = Path(path)
    by_id: dict[int, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                sample = (int(rec["frame"]), float(rec["x"]), float(rec["y"]), bool(rec["visible"]))
                track_id = int(rec["id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            by_id.setdefault(track_id, []).append(sample)

    tracks = []
    for track_id in sorted(by_id):
        samples = sorted(by_id[track_id], key=lambda s: s[0])
        frames = np.array([s[0] for s in samples], dtype=np.int64)
        if len(frames) > 1 and not np.all(np.diff(frames) > 0):
            raise NonMonotoneTrack(f"{path}: track {track_id} has duplicate or non-increasing frames")
        track = PointTrack(
            id=track_id,
            frames=frames,
            xs=np.array([s[1] for s in samples]),
            ys=np.array([s[2] for s in samples]),
            visible=np.array([s[3] for s in samples], dtype=bool),
        )
        if width is not None and height is not None:
            vx, vy = track.xs[track.visible], track.ys[track.visible]
            if vx.size and (vx.min() < 0 or vx.max() >= width or vy.min() < 0 or vy.max() >= height):
                raise OutOfBoundsTrack(f"{path}: track {track_id} outside {width}x{height}")
        tracks.append(track)
    return tracks


# ---------------------------------------------------------------------------
# trajectories (JSON)
# ---------------------------------------------------------------------------

def write_trajectory(traj: Trajectory, path) -> Path:
    path = Path(path)
    intr = traj.intrinsics
    payload = {
        "intrinsics": {
            "fx": intr.fx,
            "fy": intr.fy,
            "cx": intr.cx,
            "cy": intr.cy,
            "width": intr.width,
            "height": intr.height,
        },
        "poses": [pose.matrix().reshape(-1).tolist() for pose in traj.poses],
    }
    path.write_text(json.dumps(payload, indent=2))
    return path


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
        ji = payload["intrinsics"]
        intr = Intrinsics(
            fx=float(ji["fx"]),
            fy=float(ji["fy"]),
            cx=float(ji["cx"]),
            cy=float(ji["cy"]),
            width=int(ji["width"]),
            height=int(ji["height"]),
        )
        mats = [np.array(p, dtype=np.float64).reshape(4, 4) for p in payload["poses"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed trajectory: {exc}") from exc
    except InvariantViolation as exc:
        raise ParseError(f"{path}: invalid intrinsics: {exc}") from exc
    poses = []
    for k, mat in enumerate(mats):
        if not np.allclose(mat[3], (0, 0, 0, 1), atol=1e-12):
            raise NonOrthonormalPose(f"{path}: pose {k} bottom row must be [0 0 0 1]")
        poses.append(CameraPose(rotation=mat[:3, :3], translation=mat[:3, 3]))
    return Trajectory(intrinsics=intr, poses=tuple(poses))

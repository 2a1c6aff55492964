"""Command-line pipeline: build-mesh, render, simulate-pairs, orbit, validate, augment.

Flags override config-file values, which override defaults. Exit codes:
0 on success, 1 when a requested validation fails its threshold, 2 on
usage or input errors. ``--threads`` changes wall time only, never bytes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import formats, masks, trajectory, validate
from .config import MASK_MODES, PipelineConfig
from .core import MaskVideo, Video
from .errors import DWMeshError, LengthMismatch, ParseError
from .meshing import MeshParams, build_dwmesh, delta_depth_threshold
from .raster import render_trajectory
from .rng import substream_seed


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.maskgen = dataclasses.replace(cfg.maskgen, seed=args.seed)
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "mask_mode", None) is not None:
        cfg.mask_mode = args.mask_mode
    if getattr(args, "crop_augment", False):
        cfg.crop_augment = True
    return cfg


def _path_arg(args, cfg: PipelineConfig, name: str, required: bool = True) -> Path | None:
    value = getattr(args, name, None) or cfg.paths.get(name)
    if value is None:
        if required:
            raise ParseError(f"missing required path --{name.replace('_', '-')}")
        return None
    return Path(value)


def _load_scene(args, cfg: PipelineConfig):
    frames_dir = _path_arg(args, cfg, "frames")
    depths_dir = _path_arg(args, cfg, "depths")
    video = formats.read_frame_dir(frames_dir)
    depths = formats.read_depth_dir(depths_dir)
    if len(video) != len(depths):
        raise LengthMismatch(f"{len(video)} frames but {len(depths)} depth maps")
    for t in range(len(video)):
        if (video[t].height, video[t].width) != (depths[t].height, depths[t].width):
            raise LengthMismatch(f"frame {t}: image and depth dimensions differ")
    return video, depths


def _mesh_params_for(cfg: PipelineConfig, video: Video, depths) -> MeshParams:
    intr = cfg.intrinsics_for(video.width, video.height)
    params = dataclasses.replace(cfg.mesh, intrinsics=intr)
    if params.delta_depth is None:
        params = dataclasses.replace(
            params, delta_depth=delta_depth_threshold(depths[0], params.delta_depth_coeff)
        )
    return params


def _build_meshes(video: Video, depths, params, threads: int):
    def one(t: int):
        return build_dwmesh(video[t], depths[t], params)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(video))))
    return [one(t) for t in range(len(video))]


def cmd_build_mesh(args) -> int:
    cfg = _load_config(args)
    video, depths = _load_scene(args, cfg)
    out_dir = _path_arg(args, cfg, "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    params = _mesh_params_for(cfg, video, depths)
    meshes = _build_meshes(video, depths, params, cfg.threads)

    entries = []
    for t, mesh in enumerate(meshes):
        path = formats.write_ply(mesh, out_dir / f"mesh_{t:05d}.ply")
        entries.append(
            {
                "file": path.name,
                "faces": mesh.n_faces,
                "vertices": mesh.n_vertices,
                "occluded_face_fraction": float(mesh.face_occluded.mean()),
            }
        )
    report = validate.run_validation(meshes[0], video[0], n_rays=args.parity_rays, seed=cfg.seed)
    payload = {
        "delta_depth": params.delta_depth,
        "frames": entries,
        "first_frame_validation": json.loads(report.to_json()),
    }
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2))
    print(f"wrote {len(meshes)} meshes to {out_dir}")
    return 0


def cmd_render(args) -> int:
    cfg = _load_config(args)
    traj_path = _path_arg(args, cfg, "trajectory")
    if not traj_path.exists():
        raise ParseError(f"trajectory file not found: {traj_path}")
    traj = formats.read_trajectory(traj_path)

    mesh_dir = _path_arg(args, cfg, "mesh_dir", required=False)
    if mesh_dir is not None:
        ply_paths = sorted(Path(mesh_dir).glob("mesh_*.ply"))
        if not ply_paths:
            raise ParseError(f"{mesh_dir}: no mesh_*.ply files")
        meshes = [formats.read_ply(p) for p in ply_paths]
        d_max = cfg.mesh.d_max
    else:
        video, depths = _load_scene(args, cfg)
        params = _mesh_params_for(cfg, video, depths)
        meshes = _build_meshes(video, depths, params, cfg.threads)
        d_max = params.d_max

    out_dir = _path_arg(args, cfg, "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    color, mask = render_trajectory(meshes, traj, threads=cfg.threads, far=2.0 * d_max)
    formats.write_color_sequence(color, out_dir)
    formats.write_mask_sequence(mask, out_dir)
    print(f"rendered {len(traj)} frames to {out_dir}")
    return 0


def cmd_simulate_pairs(args) -> int:
    cfg = _load_config(args)
    if getattr(args, "tracking_only", False):
        cfg.mask_mode = "tracking"
    video, depths = _load_scene(args, cfg)
    out_dir = _path_arg(args, cfg, "out")
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.crop_augment:
        video, depths = masks.crop_augment_scene(video, depths, substream_seed(cfg.seed, 2), cfg.maskgen)

    n = len(video)
    mask_video = None
    if cfg.mask_mode in ("render", "both"):
        params = _mesh_params_for(cfg, video, depths)
        traj_path = _path_arg(args, cfg, "trajectory", required=False)
        if traj_path is not None:
            traj = formats.read_trajectory(traj_path)
        else:
            pivot = trajectory.default_pivot_depth(depths[0])
            spec = dataclasses.replace(cfg.orbit, frames=n).spec(pivot)
            traj = trajectory.make_orbit(spec, params.intrinsics)
        _, mask_video = masks.gen_rendering_masks(
            video, depths, traj, params, cfg.maskgen, threads=cfg.threads
        )

    if cfg.mask_mode in ("tracking", "both"):
        tracks_path = _path_arg(args, cfg, "tracks")
        tracks = formats.read_tracks(tracks_path, width=video.width, height=video.height)
        tracking = masks.gen_tracking_masks(tracks, n, video.height, video.width, cfg.maskgen)
        if mask_video is None:
            mask_video = tracking
        else:
            mask_video = MaskVideo(mask_video.frames * tracking.frames)

    color_video = masks.apply_mask(video, mask_video)
    formats.write_color_sequence(color_video, out_dir)
    formats.write_mask_sequence(mask_video, out_dir)
    print(f"wrote {n} training pairs to {out_dir}")
    return 0


def cmd_orbit(args) -> int:
    cfg = _load_config(args)
    orbit_cfg = dataclasses.replace(cfg.orbit)
    if args.range is not None:
        orbit_cfg.range = args.range
        orbit_cfg.theta_start_deg = orbit_cfg.theta_end_deg = None
    if args.theta_start is not None or args.theta_end is not None:
        if args.theta_start is None or args.theta_end is None:
            raise ParseError("--theta-start and --theta-end must be given together")
        orbit_cfg.theta_start_deg = args.theta_start
        orbit_cfg.theta_end_deg = args.theta_end
    if args.frames is not None:
        orbit_cfg.frames = args.frames
    if args.easing is not None:
        orbit_cfg.easing = args.easing

    pivot = args.pivot_depth if args.pivot_depth is not None else orbit_cfg.pivot_depth
    depths_dir = _path_arg(args, cfg, "depths", required=False)
    if pivot is None and depths_dir is not None:
        pivot = trajectory.default_pivot_depth(formats.read_depth_dir(depths_dir)[0])
    if pivot is None:
        pivot = 1.0  # harmless for theta=0; documented default
    intr = cfg.intrinsics_for(args.width, args.height)
    traj = trajectory.make_orbit(orbit_cfg.spec(pivot), intr)
    out_path = _path_arg(args, cfg, "out")
    formats.write_trajectory(traj, out_path)
    print(f"wrote {len(traj)}-pose trajectory to {out_path}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    mesh_path = _path_arg(args, cfg, "mesh")
    mesh = formats.read_ply(mesh_path)
    frame = None
    if args.frame:
        from PIL import Image

        from .core import FrameRGB

        frame = FrameRGB(np.asarray(Image.open(args.frame).convert("RGB")))
    report = validate.run_validation(mesh, frame, n_rays=args.rays, seed=cfg.seed)
    text = report.to_json()
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    print(text)
    ok = report.counts_ok and report.ray_parity_fraction >= args.parity_threshold
    return 0 if ok else 1


def cmd_augment(args) -> int:
    cfg = _load_config(args)
    frames_dir = _path_arg(args, cfg, "frames")
    out_dir = _path_arg(args, cfg, "out")
    video = formats.read_frame_dir(frames_dir)
    out = masks.smooth_crop_augment(video, cfg.seed, cfg.maskgen)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats.write_color_sequence(out, out_dir, prefix="frame")
    print(f"wrote {len(out)} augmented frames to {out_dir}")
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="seed for all stochastic steps")
    p.add_argument("--threads", type=int, help="worker count (never changes output bytes)")


ORBIT_RANGE_NAMES = tuple(trajectory.ORBIT_RANGES)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dwmesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-mesh", help="mesh every frame and write PLYs + validation report")
    _add_common(p)
    p.add_argument("--frames", help="directory of RGB PNG frames")
    p.add_argument("--depths", help="directory of depth files (.pfm or 16-bit .png + sidecar)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--parity-rays", type=int, default=2000, help="rays for the first-frame parity check")
    p.set_defaults(func=cmd_build_mesh)

    p = sub.add_parser("render", help="render color + mask sequences along a trajectory")
    _add_common(p)
    p.add_argument("--mesh-dir", dest="mesh_dir", help="directory of mesh_*.ply (else build from frames+depths)")
    p.add_argument("--frames")
    p.add_argument("--depths")
    p.add_argument("--trajectory", help="trajectory JSON file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("simulate-pairs", help="produce training pairs (masked color video + mask video)")
    _add_common(p)
    p.add_argument("--frames")
    p.add_argument("--depths")
    p.add_argument("--out")
    p.add_argument("--trajectory", help="override the default full orbit for rendering masks")
    p.add_argument("--tracks", help="JSONL point tracks (required for tracking modes)")
    p.add_argument("--mask-mode", dest="mask_mode", choices=MASK_MODES)
    p.add_argument("--tracking-only", dest="tracking_only", action="store_true", help="skip the rendering stage")
    p.add_argument("--crop-augment", dest="crop_augment", action="store_true", help="seeded smooth crop of the scene first")
    p.set_defaults(func=cmd_simulate_pairs)

    p = sub.add_parser("orbit", help="emit an orbit trajectory JSON")
    _add_common(p)
    p.add_argument("--range", choices=sorted(ORBIT_RANGE_NAMES))
    p.add_argument("--theta-start", dest="theta_start", type=float)
    p.add_argument("--theta-end", dest="theta_end", type=float)
    p.add_argument("--frames", type=int, help="pose count (default 49)")
    p.add_argument("--easing", choices=["linear", "ease_in_out"])
    p.add_argument("--pivot-depth", dest="pivot_depth", type=float)
    p.add_argument("--depths", help="depth dir; pivot = median of the first map")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--out")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("validate", help="watertightness and identity-render report for a mesh")
    _add_common(p)
    p.add_argument("--mesh", help="PLY file")
    p.add_argument("--frame", help="source frame PNG for the identity render check")
    p.add_argument("--rays", type=int, default=10000)
    p.add_argument("--parity-threshold", dest="parity_threshold", type=float, default=0.999)
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("augment", help="seeded smooth-crop augmentation of a frame directory")
    _add_common(p)
    p.add_argument("--frames")
    p.add_argument("--out")
    p.set_defaults(func=cmd_augment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DWMeshError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

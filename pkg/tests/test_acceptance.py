"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one `[ACCEPTANCE] <criterion>: PASS|FAIL` line (visible
with `pytest -s tests/test_acceptance.py`). Runtime budgets are part of
the criteria and enforced.
"""

import contextlib
import time

import numpy as np

from conftest import assert_matches_oracle, random_mesh, random_scene, tree_bytes, write_scene
from dwmesh.cli import main
from dwmesh.core import DepthMap, FrameRGB, Intrinsics
from dwmesh.formats import read_trajectory
from dwmesh.masks import (
    MaskGenParams,
    PointTrack,
    crop_path,
    dilate_invisible,
    gen_tracking_masks,
    pair_cell_occlusion,
    sample_point_grid,
)
from dwmesh.meshing import MeshParams, build_dwmesh, build_faces, delta_depth_threshold, pad_boundary
from dwmesh.raster import rasterize
from dwmesh.trajectory import OrbitSpec, make_orbit
from dwmesh.validate import identity_render_check, ray_parity_check, raycast_buffers


@contextlib.contextmanager
def criterion(name: str, budget_s: float | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL ({time.perf_counter() - t0:.1f}s)")
        raise
    elapsed = time.perf_counter() - t0
    if budget_s is not None and elapsed > budget_s:
        print(f"[ACCEPTANCE] {name}: FAIL (runtime {elapsed:.1f}s > {budget_s:.0f}s budget)")
        raise AssertionError(f"{name}: runtime {elapsed:.1f}s exceeds {budget_s:.0f}s budget")
    print(f"[ACCEPTANCE] {name}: PASS ({elapsed:.1f}s)")


def test_mesh_count_law():
    with criterion("mesh count law (200 random sizes + 512x512)", budget_s=10.0):
        rng = np.random.default_rng(20240)
        for _ in range(200):
            h, w = (int(v) for v in rng.integers(2, 65, 2))
            mesh = random_mesh(int(rng.integers(0, 2**31)), h, w)
            assert mesh.n_vertices == h * w
            assert mesh.n_faces == 2 * (h - 1) * (w - 1) + 2
        faces512, _ = build_faces(512, 512)
        assert faces512.shape[0] == 522_244


def test_watertight_parity():
    with criterion("watertight parity (20 meshes, 10k rays each, >= 0.999)", budget_s=60.0):
        for seed in range(20):
            frame, depth = random_scene(seed, 32, 32)
            mesh = build_dwmesh(frame, depth)
            fraction = ray_parity_check(mesh, n_rays=10_000, seed=seed, threads=2)
            assert fraction >= 0.999, f"seed {seed}: parity {fraction}"


def test_threshold_constants():
    with criterion("threshold constants (0.013 coefficient, D_max = 100)"):
        rng = np.random.default_rng(77)
        for _ in range(25):
            lo = float(rng.uniform(0.1, 5.0))
            hi = lo + float(rng.uniform(0.0, 50.0))
            values = np.linspace(lo, hi, 64).reshape(8, 8)
            got = delta_depth_threshold(DepthMap.from_values(values), 0.013)
            want = 0.013 * (hi - lo)
            assert abs(got - want) <= 1e-9 * max(abs(want), 1e-300)
        for h, w in ((2, 2), (5, 9), (17, 4)):
            depth = DepthMap.from_values(np.full((h, w), 1.0))
            padded = pad_boundary(depth, 100.0)
            border = np.ones((h, w), dtype=bool)
            border[1:-1, 1:-1] = False
            assert np.all(padded.values[border] == 100.0)


def test_rasterizer_oracle_equivalence():
    with criterion("rasterizer-oracle equivalence (50 meshes x 3 poses, 64x64)", budget_s=120.0):
        rng = np.random.default_rng(4242)
        intr = Intrinsics.canonical(64, 64)
        for k in range(50):
            h, w = (int(v) for v in rng.integers(9, 34, 2))  # up to 32x32 cells
            mesh = random_mesh(k, h, w)
            for _ in range(3):
                theta = float(rng.uniform(-80.0, 80.0))
                pose = make_orbit(OrbitSpec(theta, theta, 1, pivot_depth=1.5), intr).poses[0]
                target = rasterize(mesh, pose, intr, far=200.0)
                fid, depth = raycast_buffers(mesh, pose, intr, far=200.0, threads=2)
                assert_matches_oracle(mesh, pose, intr, target, fid, depth, edge_band=1e-6)


def test_identity_render():
    with criterion("identity render (constant exact, gradient <= 1 step)"):
        for h, w, color in ((12, 12, (200, 0, 255)), (9, 15, (1, 2, 3))):
            frame = FrameRGB.constant(h, w, color)
            depth = DepthMap.from_values(np.full((h, w), 2.0))
            mesh = build_dwmesh(frame, depth)
            stats = identity_render_check(mesh, frame)
            assert stats["n_pixels"] > 0
            assert stats["max_abs_error"] == 0.0
        h = w = 16
        ramp = np.arange(w, dtype=np.uint8)
        frame = FrameRGB(np.stack([np.tile(ramp, (h, 1))] * 3, axis=2))
        mesh = build_dwmesh(frame, DepthMap.from_values(np.full((h, w), 2.0)), MeshParams(delta_depth=1.0))
        stats = identity_render_check(mesh, frame)
        assert stats["n_pixels"] > 0
        assert stats["max_abs_error"] <= 1.0


def test_mask_pipeline():
    with criterion("mask pipeline (dilation, pairing, grid, crop, tracking)"):
        # 5x5 dilation of an isolated invisible pixel, center and corner.
        mask = np.ones((11, 11), dtype=np.uint8)
        mask[5, 5] = 0
        out = dilate_invisible(mask, 5)
        expected = np.ones((11, 11), dtype=np.uint8)
        expected[3:8, 3:8] = 0
        assert np.array_equal(out, expected)
        corner = np.ones((8, 8), dtype=np.uint8)
        corner[0, 0] = 0
        out = dilate_invisible(corner, 5)
        expected = np.ones((8, 8), dtype=np.uint8)
        expected[:3, :3] = 0
        assert np.array_equal(out, expected)

        # Cell pairing leaves no mixed cells.
        for seed in range(10):
            paired = pair_cell_occlusion(random_mesh(seed, 16, 16))
            occ = paired.face_occluded[: paired.n_grid_faces]
            assert np.array_equal(occ[0::2], occ[1::2])

        # Point grid count and crop fraction ranges.
        for seed in range(300):
            assert 10 <= len(sample_point_grid(48, 64, seed)) <= 50
            sh, sw, _ = crop_path(seed, MaskGenParams(), 5, 40, 60)
            assert 0.85 - 1e-12 <= sh / 40 <= 0.95 + 1e-12
            assert 0.85 - 1e-12 <= sw / 60 <= 0.95 + 1e-12

        # Tracking persistence: frames before the start frame untouched,
        # invisibility persists afterwards for a static occluder.
        track = PointTrack(
            id=0, frames=np.array([0]), xs=np.array([6.0]), ys=np.array([6.0]), visible=np.array([True])
        )
        for seed in range(25):
            params = MaskGenParams(occluder_fraction=1.0, occluder_half_extent=2, seed=seed)
            mv = gen_tracking_masks([track], 9, 13, 13, params)
            starts = [t for t in range(9) if (mv[t] == 0).any()]
            assert starts, "occluder never activated"
            t0 = starts[0]
            assert starts == list(range(t0, 9))
            for t in range(t0):
                assert np.all(mv[t] == 1)
            block = np.s_[4:9, 4:9]
            for t in range(t0, 9):
                assert np.all(mv[t][block] == 0)


def test_cli_determinism():
    with criterion("CLI determinism (repeat runs and --threads 1/2/8)"):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            frames, depths = write_scene(root, n_frames=3, h=12, w=12)
            traj = root / "traj.json"
            assert main(["orbit", "--range", "large", "--frames", "3", "--pivot-depth", "2.0",
                         "--width", "12", "--height", "12", "--out", str(traj)]) == 0

            recipes = {
                "build-mesh": lambda out, th: main(
                    ["build-mesh", "--frames", str(frames), "--depths", str(depths),
                     "--out", out, "--threads", th, "--seed", "5", "--parity-rays", "300"]),
                "render": lambda out, th: main(
                    ["render", "--frames", str(frames), "--depths", str(depths),
                     "--trajectory", str(traj), "--out", out, "--threads", th, "--seed", "5"]),
                "simulate-pairs": lambda out, th: main(
                    ["simulate-pairs", "--frames", str(frames), "--depths", str(depths),
                     "--out", out, "--threads", th, "--seed", "5"]),
            }
            for name, run in recipes.items():
                outputs = []
                for tag, th in (("a", "1"), ("b", "1"), ("c", "2"), ("d", "8")):
                    out = root / f"{name}-{tag}"
                    assert run(str(out), th) == 0, f"{name} failed at threads={th}"
                    outputs.append(tree_bytes(out))
                for other in outputs[1:]:
                    assert other == outputs[0], f"{name}: outputs differ across runs/threads"


def test_orbit_ranges():
    with criterion("orbit ranges (named sweeps hit exact endpoints, theta=0 is identity)"):
        import tempfile
        from pathlib import Path

        expected = {
            "small": (0.0, 30.0),
            "large": (0.0, 60.0),
            "extreme": (0.0, 90.0),
            "full": (-90.0, 90.0),
        }
        pivot = 1.5
        with tempfile.TemporaryDirectory() as td:
            for name, (start, end) in expected.items():
                path = Path(td) / f"{name}.json"
                assert main(["orbit", "--range", name, "--frames", "49",
                             "--pivot-depth", str(pivot), "--out", str(path)]) == 0
                traj = read_trajectory(path)
                assert len(traj) == 49

                def azimuth(pose):
                    c = pose.camera_center()
                    return float(np.degrees(np.arctan2(c[0], pivot - c[2])))

                assert abs(azimuth(traj.poses[0]) - start) <= 1e-12
                assert abs(azimuth(traj.poses[-1]) - end) <= 1e-12
                if start == 0.0:
                    first = traj.poses[0]
                    assert np.abs(first.rotation - np.eye(3)).max() <= 1e-9
                    assert np.abs(first.translation).max() <= 1e-9

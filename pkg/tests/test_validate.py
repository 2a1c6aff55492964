import numpy as np
import pytest

from conftest import random_mesh, random_scene
from dwmesh.core import CameraPose, DepthMap, FrameRGB, Intrinsics
from dwmesh.meshing import DWMesh, FaceClass, MeshParams, build_dwmesh
from dwmesh.validate import (
    identity_render_check,
    ray_parity_check,
    raycast_reference,
    run_validation,
)


def soup_mesh(verts, faces):
    """Arbitrary triangle soup wrapped for the geometry-only checkers."""
    n = len(faces)
    return DWMesh(
        vertices=np.asarray(verts, dtype=np.float32),
        faces=np.asarray(faces, dtype=np.int32),
        face_color=np.zeros((n, 3), dtype=np.uint8),
        face_occluded=np.zeros(n, dtype=bool),
        face_class=np.full(n, FaceClass.SURFACE, dtype=np.uint8),
        height=2,
        width=2,
    )


def box_mesh(lo=(0.0, 0.0, 1.0), hi=(1.0, 1.0, 2.0)):
    """Closed axis-aligned box: 8 vertices, 12 triangles."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    verts = [
        (x0, y0, z0), (x1, y0, z0), (x0, y1, z0), (x1, y1, z0),
        (x0, y0, z1), (x1, y0, z1), (x0, y1, z1), (x1, y1, z1),
    ]
    faces = [
        (0, 1, 2), (1, 3, 2),  # z0 face
        (4, 6, 5), (5, 6, 7),  # z1 face
        ( 0, 2, 4), (2, 6, 4), # x0 face
        (1, 5, 3), (3, 5, 7),  # x1 face
        (0, 4, 1), (1, 4, 5),  # y0 face
        (2, 3, 6), (3, 7, 6),  # y1 face
    ]
    return soup_mesh(verts, faces)


class TestRayParityCheck:
    def test_closed_box(self):
        assert ray_parity_check(box_mesh(), n_rays=2000, seed=0) == 1.0

    def test_single_open_triangle(self):
        tri = soup_mesh([(0, 0, 1), (1, 0, 1), (0, 1, 1)], [(0, 1, 2)])
        assert ray_parity_check(tri, n_rays=2000, seed=0) < 1.0

    def test_random_dwmesh(self):
        mesh = random_mesh(13, 32, 32)
        assert ray_parity_check(mesh, n_rays=2000, seed=13) >= 0.999

    def test_seeded_determinism(self):
        mesh = random_mesh(17, 16, 16)
        a = ray_parity_check(mesh, n_rays=1500, seed=4)
        b = ray_parity_check(mesh, n_rays=1500, seed=4)
        assert a == b

    def test_thread_invariance(self):
        mesh = random_mesh(19, 16, 16)
        a = ray_parity_check(mesh, n_rays=1500, seed=9, threads=1)
        b = ray_parity_check(mesh, n_rays=1500, seed=9, threads=2)
        assert a == b


class TestRaycastReference:
    INTR = Intrinsics.canonical(16, 16)

    def test_single_frontal_triangle(self):
        tri = soup_mesh([(-5, -5, 2), (5, -5, 2), (0, 5, 2)], [(0, 1, 2)])
        face, depth = raycast_reference(tri, CameraPose.identity(), self.INTR, (8, 8))
        assert face == 0
        assert depth == pytest.approx(2.0, abs=1e-12)

    def test_miss(self):
        tri = soup_mesh([(10, 10, 2), (11, 10, 2), (10, 11, 2)], [(0, 1, 2)])
        face, depth = raycast_reference(tri, CameraPose.identity(), self.INTR, (8, 8))
        assert face is None
        assert np.isinf(depth)

    def test_lower_index_tie_break(self):
        # Two coplanar identical triangles: both hit at the same depth.
        verts = [(-5, -5, 2), (5, -5, 2), (0, 5, 2)]
        dup = soup_mesh(verts + verts, [(0, 1, 2), (3, 4, 5)])
        face, _ = raycast_reference(dup, CameraPose.identity(), self.INTR, (8, 8))
        assert face == 0


class TestIdentityRenderCheck:
    def test_constant_color_zero_error(self):
        frame = FrameRGB.constant(10, 10, (7, 99, 201))
        depth = DepthMap.from_values(np.full((10, 10), 2.0))
        mesh = build_dwmesh(frame, depth)
        stats = identity_render_check(mesh, frame)
        assert stats["n_pixels"] > 0
        assert stats["max_abs_error"] == 0.0

    def test_gradient_within_one_step(self):
        h = w = 12
        ramp = np.arange(w, dtype=np.uint8)
        pixels = np.stack([np.tile(ramp, (h, 1))] * 3, axis=2)
        frame = FrameRGB(pixels)
        depth = DepthMap.from_values(np.full((h, w), 2.0))
        mesh = build_dwmesh(frame, depth, MeshParams(delta_depth=1.0))
        stats = identity_render_check(mesh, frame)
        assert stats["n_pixels"] > 0
        assert stats["max_abs_error"] <= 1.0

    def test_fully_occluded_vacuous(self):
        base = random_mesh(23, 8, 8)
        occluded = DWMesh(
            vertices=base.vertices,
            faces=base.faces,
            face_color=np.zeros_like(base.face_color),
            face_occluded=np.ones(base.n_faces, dtype=bool),
            face_class=base.face_class,
            height=8,
            width=8,
        )
        stats = identity_render_check(occluded, FrameRGB.constant(8, 8))
        assert stats["n_pixels"] == 0
        assert stats["mean_abs_error"] is None


class TestRunValidation:
    def test_good_mesh_reports_clean(self):
        frame, depth = random_scene(29, 12, 12)
        mesh = build_dwmesh(frame, depth, MeshParams(delta_depth=5.0))
        report = run_validation(mesh, frame, n_rays=1500, seed=2)
        assert report.counts_ok
        assert report.ray_parity_fraction >= 0.999
        assert report.identity_render_max_error == 0.0
        assert 0.0 <= report.occluded_face_fraction <= 1.0
        parsed = report.to_json()
        assert '"counts_ok": true' in parsed

    def test_open_surface_flagged(self):
        tri = soup_mesh([(0, 0, 1), (1, 0, 1), (0, 1, 1)], [(0, 1, 2)])
        report = run_validation(tri, n_rays=1000, seed=0)
        assert not report.counts_ok  # soup violates the structural counts
        assert report.ray_parity_fraction < 1.0
        assert report.notes

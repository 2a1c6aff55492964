import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from conftest import random_mesh
from dwmesh.core import CameraPose, DepthMap, Intrinsics, MaskVideo, Trajectory
from dwmesh.errors import (
    NonMonotoneTrack,
    NonOrthonormalPose,
    NonPositiveDepth,
    OutOfBoundsTrack,
    ParseError,
)
from dwmesh.formats import (
    read_depth,
    read_mask_sequence,
    read_pfm,
    read_ply,
    read_tracks,
    read_trajectory,
    write_depth_png16,
    write_mask_sequence,
    write_pfm,
    write_ply,
    write_trajectory,
)
from dwmesh.trajectory import OrbitSpec, make_orbit


class TestPFM:
    def test_constant_roundtrip(self, tmp_path):
        d = DepthMap.from_values(np.full((2, 2), 1.0))
        path = write_pfm(d, tmp_path / "d.pfm")
        back = read_pfm(path)
        assert np.array_equal(back.values, d.values)
        assert back.d_min == 1.0 and back.d_max == 1.0

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_random_roundtrip(self, seed):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        # float32-representable values roundtrip exactly
        values = (0.5 + rng.random((5, 7))).astype(np.float32).astype(np.float64)
        d = DepthMap.from_values(values)
        with tempfile.TemporaryDirectory() as td:
            back = read_pfm(write_pfm(d, Path(td) / "d.pfm"))
        assert np.array_equal(back.values, values)

    def test_row_order_bottom_to_top(self, tmp_path):
        values = np.array([[1.0, 2.0], [3.0, 4.0]])
        path = write_pfm(DepthMap.from_values(values), tmp_path / "d.pfm")
        raw = path.read_bytes()
        header_end = raw.index(b"-1.0\n") + 5
        floats = struct.unpack("<4f", raw[header_end:])
        assert floats == (3.0, 4.0, 1.0, 2.0)  # bottom row first

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "bad.pfm"
        p.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)  # color PFM, not grayscale
        with pytest.raises(ParseError):
            read_pfm(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "short.pfm"
        p.write_bytes(b"Pf\n2 2\n-1.0\n" + b"\x00" * 8)
        with pytest.raises(ParseError):
            read_pfm(p)

    def test_nonpositive_rejected(self, tmp_path):
        p = tmp_path / "neg.pfm"
        data = struct.pack("<4f", 1.0, -1.0, 1.0, 1.0)
        p.write_bytes(b"Pf\n2 2\n-1.0\n" + data)
        with pytest.raises(NonPositiveDepth):
            read_pfm(p)


class TestDepthPNG16:
    def test_linear_map_endpoints(self, tmp_path):
        raw = np.array([[0, 65535], [32768, 1000]], dtype=np.uint16)
        p = tmp_path / "d.png"
        Image.fromarray(raw).save(p)
        p.with_suffix(".json").write_text(json.dumps({"d_min": 0.5, "d_max": 10.0}))
        d = read_depth(p)
        assert d.values[0, 0] == pytest.approx(0.5)  # raw 0 -> d_min
        assert d.values[0, 1] == pytest.approx(10.0)  # raw 65535 -> d_max
        assert d.values[1, 0] == pytest.approx(0.5 + 32768 / 65535 * 9.5)

    def test_roundtrip_on_representable_values(self, tmp_path):
        raw = np.array([[0, 13107], [26214, 65535]], dtype=np.float64)
        values = 1.0 + raw / 65535.0 * 4.0
        d = DepthMap.from_values(values)
        back = read_depth(write_depth_png16(d, tmp_path / "d.png"))
        assert np.allclose(back.values, values, atol=1e-12)

    def test_missing_sidecar(self, tmp_path):
        raw = np.zeros((2, 2), dtype=np.uint16)
        p = tmp_path / "d.png"
        Image.fromarray(raw).save(p)
        with pytest.raises(ParseError):
            read_depth(p)

    def test_nonpositive_rejected(self, tmp_path):
        raw = np.zeros((2, 2), dtype=np.uint16)
        p = tmp_path / "d.png"
        Image.fromarray(raw).save(p)
        p.with_suffix(".json").write_text(json.dumps({"d_min": 0.0, "d_max": 1.0}))
        with pytest.raises(NonPositiveDepth):
            read_depth(p)


class TestMaskSequence:
    def test_all_visible_is_255(self, tmp_path):
        masks = MaskVideo(np.ones((1, 3, 3), dtype=np.uint8))
        paths = write_mask_sequence(masks, tmp_path)
        arr = np.asarray(Image.open(paths[0]))
        assert np.all(arr == 255)

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        masks = MaskVideo((rng.random((4, 6, 5)) > 0.5).astype(np.uint8))
        write_mask_sequence(masks, tmp_path)
        back = read_mask_sequence(tmp_path)
        assert np.array_equal(back.frames, masks.frames)

    def test_49_frame_naming(self, tmp_path):
        masks = MaskVideo(np.ones((49, 2, 2), dtype=np.uint8))
        paths = write_mask_sequence(masks, tmp_path)
        assert paths[0].name == "mask_00000.png"
        assert paths[-1].name == "mask_00048.png"
        assert len(paths) == 49

    def test_rejects_other_values(self, tmp_path):
        Image.fromarray(np.full((2, 2), 7, dtype=np.uint8), mode="L").save(tmp_path / "mask_00000.png")
        with pytest.raises(ParseError):
            read_mask_sequence(tmp_path)


class TestPLY:
    def test_smallest_mesh(self, tmp_path):
        mesh = random_mesh(0, 2, 2)
        path = write_ply(mesh, tmp_path / "m.ply")
        back = read_ply(path)
        assert back.n_vertices == 4 and back.n_faces == 4

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_roundtrip_lossless(self, tmp_path, seed):
        mesh = random_mesh(seed, 7, 9)
        back = read_ply(write_ply(mesh, tmp_path / "m.ply"))
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.faces, mesh.faces)
        assert np.array_equal(back.face_color, mesh.face_color)
        assert np.array_equal(back.face_occluded, mesh.face_occluded)
        assert np.array_equal(back.face_class, mesh.face_class)
        assert (back.height, back.width) == (mesh.height, mesh.width)

    def test_occluded_face_bytes(self, tmp_path):
        mesh = random_mesh(4, 6, 6)
        occluded_ids = np.nonzero(mesh.face_occluded)[0]
        assert occluded_ids.size > 0
        path = write_ply(mesh, tmp_path / "m.ply")
        raw = path.read_bytes()
        header_end = raw.index(b"end_header\n") + len(b"end_header\n")
        face_block = raw[header_end + mesh.n_vertices * 12 :]
        rec = struct.Struct("<B3i5B")
        offset = int(occluded_ids[0]) * rec.size
        fields = rec.unpack_from(face_block, offset)
        count, i0, i1, i2, r, g, b, occ, fclass = fields
        assert count == 3
        assert (r, g, b) == (0, 0, 0)
        assert occ == 1

    def test_corrupted_face_rejected(self, tmp_path):
        mesh = random_mesh(5, 5, 5)
        path = write_ply(mesh, tmp_path / "m.ply")
        raw = bytearray(path.read_bytes())
        header_end = raw.index(b"end_header\n") + len(b"end_header\n")
        # Paint a red byte onto the first occluded face record.
        occ_id = int(np.nonzero(mesh.face_occluded)[0][0])
        rec = struct.Struct("<B3i5B")
        red_offset = header_end + mesh.n_vertices * 12 + occ_id * rec.size + 13
        raw[red_offset] = 200
        path.write_bytes(bytes(raw))
        from dwmesh.errors import InvariantViolation

        with pytest.raises(InvariantViolation):
            read_ply(path)

    def test_missing_grid_comment(self, tmp_path):
        mesh = random_mesh(6, 4, 4)
        path = write_ply(mesh, tmp_path / "m.ply")
        text = path.read_bytes().replace(b"comment grid 4 4\n", b"")
        bad = tmp_path / "bad.ply"
        bad.write_bytes(text)
        with pytest.raises(ParseError):
            read_ply(bad)


class TestTracks:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text("")
        assert read_tracks(p) == []

    def test_grouping(self, tmp_path):
        p = tmp_path / "t.jsonl"
        lines = [
            {"id": 1, "frame": 0, "x": 1.0, "y": 2.0, "visible": True},
            {"id": 2, "frame": 0, "x": 5.0, "y": 5.0, "visible": True},
            {"id": 1, "frame": 1, "x": 1.5, "y": 2.5, "visible": True},
        ]
        p.write_text("\n".join(json.dumps(rec) for rec in lines))
        tracks = read_tracks(p)
        assert len(tracks) == 2
        assert tracks[0].id == 1 and len(tracks[0].frames) == 2
        assert tracks[0].frames.tolist() == [0, 1]

    def test_duplicate_frame_rejected(self, tmp_path):
        p = tmp_path / "t.jsonl"
        rec = {"id": 1, "frame": 3, "x": 1.0, "y": 2.0, "visible": True}
        p.write_text(json.dumps(rec) + "\n" + json.dumps(rec))
        with pytest.raises(NonMonotoneTrack):
            read_tracks(p)

    def test_unsorted_input_sorted(self, tmp_path):
        p = tmp_path / "t.jsonl"
        lines = [
            {"id": 1, "frame": 4, "x": 1.0, "y": 1.0, "visible": True},
            {"id": 1, "frame": 2, "x": 0.0, "y": 0.0, "visible": True},
        ]
        p.write_text("\n".join(json.dumps(rec) for rec in lines))
        (track,) = read_tracks(p)
        assert track.frames.tolist() == [2, 4]
        assert track.xs.tolist() == [0.0, 1.0]

    def test_bounds_checked_when_dims_given(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text(json.dumps({"id": 1, "frame": 0, "x": 99.0, "y": 2.0, "visible": True}))
        with pytest.raises(OutOfBoundsTrack):
            read_tracks(p, width=10, height=10)

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"id": 1, "frame": 0}')
        with pytest.raises(ParseError):
            read_tracks(p)


class TestTrajectoryIO:
    INTR = Intrinsics.canonical(32, 32)

    def test_identity_roundtrip(self, tmp_path):
        traj = Trajectory(intrinsics=self.INTR, poses=(CameraPose.identity(),))
        back = read_trajectory(write_trajectory(traj, tmp_path / "t.json"))
        assert len(back) == 1
        assert np.array_equal(back.poses[0].rotation, np.eye(3))
        assert back.intrinsics == self.INTR

    def test_full_orbit_49(self, tmp_path):
        traj = make_orbit(OrbitSpec(-90.0, 90.0, 49, pivot_depth=1.0), self.INTR)
        back = read_trajectory(write_trajectory(traj, tmp_path / "t.json"))
        assert len(back) == 49
        for orig, loaded in zip(traj.poses, back.poses):
            assert np.allclose(orig.rotation, loaded.rotation, atol=1e-15)
            assert np.allclose(orig.translation, loaded.translation, atol=1e-15)

    def test_corrupted_rotation(self, tmp_path):
        traj = Trajectory(intrinsics=self.INTR, poses=(CameraPose.identity(),))
        path = write_trajectory(traj, tmp_path / "t.json")
        payload = json.loads(path.read_text())
        payload["poses"][0][0] = 2.0  # breaks orthonormality
        path.write_text(json.dumps(payload))
        with pytest.raises(NonOrthonormalPose):
            read_trajectory(path)

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "t.json"
        p.write_text("{not json")
        with pytest.raises(ParseError):
            read_trajectory(p)

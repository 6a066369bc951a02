import math
import struct

import numpy as np
import pytest
from PIL import Image

from depthstruct.core import (CameraIntrinsics, DepthFormatError, DepthGrid, FeatureTensor,
                              SeededRng, next_uniform, read_feature_tensor, read_intrinsics,
                              read_pfm, read_png16, write_feature_tensor, write_intrinsics,
                              write_pfm, write_png16)


def test_pfm_round_trip_2x2(tmp_path):
    g = DepthGrid(np.array([[1, 2], [3, 4]], dtype=np.float32))
    write_pfm(g, tmp_path / "a.pfm")
    back = read_pfm(tmp_path / "a.pfm")
    assert back.values.tolist() == [[1, 2], [3, 4]]
    assert back.mask.all()


def test_pfm_scanlines_are_bottom_to_top(tmp_path):
    path = tmp_path / "hand.pfm"
    path.write_bytes(b"Pf\n2 2\n-1.0\n" + struct.pack("<4f", 3, 4, 1, 2))
    assert read_pfm(path).values.tolist() == [[1, 2], [3, 4]]


def test_pfm_big_endian(tmp_path):
    path = tmp_path / "be.pfm"
    path.write_bytes(b"Pf\n2 1\n1.0\n" + struct.pack(">2f", 0.5, 7.0))
    assert read_pfm(path).values.tolist() == [[0.5, 7.0]]


def test_pfm_color_rejected(tmp_path):
    path = tmp_path / "c.pfm"
    path.write_bytes(b"PF\n1 1\n-1.0\n" + struct.pack("<3f", 1, 2, 3))
    with pytest.raises(DepthFormatError, match="color PFM unsupported"):
        read_pfm(path)


@pytest.mark.parametrize("payload", [
    b"Pf\n2 2\n-1.0\n" + b"\0" * 12,
    b"Pf\n2 2\n",
    b"Pf\nx 2\n-1.0\n" + b"\0" * 16,
    b"Pf\n100000 100000\n-1.0\n",
    b"JUNK",
])
def test_pfm_malformed_or_truncated(tmp_path, payload):
    path = tmp_path / "bad.pfm"
    path.write_bytes(payload)
    with pytest.raises(DepthFormatError):
        read_pfm(path)


def test_pfm_nan_pixel_is_invalid(tmp_path):
    path = tmp_path / "nan.pfm"
    path.write_bytes(b"Pf\n2 1\n-1.0\n" + struct.pack("<2f", float("nan"), 2.0))
    g = read_pfm(path)
    assert g.mask.tolist() == [[False, True]]


def test_pfm_invalid_pixel_written_as_nan(tmp_path):
    g = DepthGrid(np.ones((2, 2), np.float32), mask=np.array([[True, False], [True, True]]))
    write_pfm(g, tmp_path / "m.pfm")
    raw = np.frombuffer((tmp_path / "m.pfm").read_bytes()[-16:], "<f4")
    # bottom row first: [3, 4] then [1, 2]; the invalid pixel is top-right
    assert math.isnan(raw[3]) and np.isfinite(raw[:3]).all()


def test_pfm_empty_path_is_io_error():
    with pytest.raises(OSError):
        write_pfm(DepthGrid(np.ones((2, 2))), "")


@pytest.mark.parametrize("seed", range(10))
def test_pfm_bitwise_round_trip(tmp_path, seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(7, 5)).astype(np.float32)
    write_pfm(DepthGrid(vals), tmp_path / "r.pfm")
    assert read_pfm(tmp_path / "r.pfm").values.tobytes() == vals.tobytes()


def test_png16_conversion(tmp_path):
    raw = np.array([[1000, 0], [2500, 65535]], dtype=np.uint16)
    Image.fromarray(raw).save(tmp_path / "d.png")
    g = read_png16(tmp_path / "d.png", scale=0.001)
    assert g.values[0, 0] == pytest.approx(1.0)
    assert g.mask.tolist() == [[True, False], [True, True]]


def test_png16_round_trip(tmp_path):
    g = DepthGrid(np.array([[1.0, 2.5]], dtype=np.float32))
    write_png16(g, tmp_path / "x.png")
    assert read_png16(tmp_path / "x.png").values.tolist() == [[1.0, 2.5]]


def test_png8_rejected(tmp_path):
    Image.fromarray(np.zeros((2, 2), np.uint8)).save(tmp_path / "e.png")
    with pytest.raises(DepthFormatError):
        read_png16(tmp_path / "e.png")


def test_ftn1_read_known_values(tmp_path):
    path = tmp_path / "f.ftn"
    path.write_bytes(b"FTN1" + struct.pack("<III", 1, 1, 2) + struct.pack("<2f", 0.5, -0.5))
    t = read_feature_tensor(path)
    assert t.values.shape == (1, 1, 2)
    assert t.values.ravel().tolist() == [0.5, -0.5]


def test_ftn1_bad_magic(tmp_path):
    path = tmp_path / "f.ftn"
    path.write_bytes(b"XXXX" + struct.pack("<III", 1, 1, 1) + b"\0" * 4)
    with pytest.raises(DepthFormatError):
        read_feature_tensor(path)


def test_ftn1_size_mismatch(tmp_path):
    path = tmp_path / "f.ftn"
    path.write_bytes(b"FTN1" + struct.pack("<III", 2, 2, 8) + b"\0" * 400)
    with pytest.raises(DepthFormatError, match="size mismatch"):
        read_feature_tensor(path)


def test_ftn1_round_trip(tmp_path, rng):
    t = FeatureTensor(rng.normal(size=(3, 4, 5)))
    write_feature_tensor(t, tmp_path / "t.ftn")
    assert read_feature_tensor(tmp_path / "t.ftn").values.tobytes() == t.values.tobytes()


def test_intrinsics_json_round_trip(tmp_path):
    K = CameraIntrinsics(500.0, 510.0, 319.5, 239.5, 640, 480)
    write_intrinsics(K, tmp_path / "k.json")
    assert read_intrinsics(tmp_path / "k.json") == K


@pytest.mark.parametrize("kw", [dict(fx=0.0), dict(cx=640.0), dict(cy=-1.0)])
def test_intrinsics_invariants(kw):
    args = dict(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
    args.update(kw)
    with pytest.raises(ValueError):
        CameraIntrinsics(**args)


def test_rng_deterministic():
    a = SeededRng(42)
    b = SeededRng(42)
    assert [a.next_uniform() for _ in range(3)] == [b.next_uniform() for _ in range(3)]


def test_rng_splitmix64_reference_value():
    # First splitmix64 output for seed 0, as published with the algorithm.
    assert SeededRng(0).next_u64() == 0xE220A8397B1DCDAF


def test_rng_rejects_empty_interval():
    with pytest.raises(ValueError):
        next_uniform(SeededRng(1), 2.0, 2.0)


def test_rng_bounds():
    rng = SeededRng(7)
    draws = rng.uniform(100_000)
    assert draws.min() >= 0.0 and draws.max() < 1.0


def test_depth_grid_shape_and_mask():
    g = DepthGrid(np.array([[1.0, np.inf, 3.0]]))
    assert (g.width, g.height) == (3, 1)
    assert g.mask.tolist() == [[True, False, True]]
    assert g.values.dtype == np.float32

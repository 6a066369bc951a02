"""Depth grids, feature tensors, intrinsics, a portable PRNG and file I/O.

Invalid pixels are tracked with a boolean mask. On disk they are NaN in PFM
files and 0 in 16-bit PNG files.
"""

from __future__ import annotations

import json
import math
import os
import re
import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

_MASK64 = (1 << 64) - 1
_MAX_PIXELS = 1 << 28


class DepthFormatError(ValueError):
    """Raised for malformed, truncated or unsupported depth/feature files."""


@dataclass(frozen=True, eq=False)
class DepthGrid:
    """H x W single-precision depth with a per-pixel validity mask."""

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValueError(f"depth grid must be 2-D, got shape {values.shape}")
        finite = np.isfinite(values)
        if self.mask is None:
            mask = finite
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValueError("mask shape does not match values")
            mask = mask & finite
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def fully_valid(self) -> bool:
        return bool(self.mask.all())

    def filled(self, fill=np.nan) -> np.ndarray:
        """Values as float64 with invalid pixels replaced by `fill`."""
        out = self.values.astype(np.float64)
        out[~self.mask] = fill
        return out


DepthLike = Union[DepthGrid, np.ndarray]


def as_values_mask(depth: DepthLike) -> tuple[np.ndarray, np.ndarray]:
    """Return (float64 values, validity mask) for a grid or a raw 2-D array.

    Raw arrays keep their precision; non-finite entries are treated as
    invalid.
    """
    if isinstance(depth, DepthGrid):
        return depth.values.astype(np.float64), depth.mask
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {arr.shape}")
    return arr, np.isfinite(arr)


def as_full_array(depth: DepthLike, what: str = "depth") -> np.ndarray:
    """float64 values of a depth that must have no invalid pixels."""
    values, mask = as_values_mask(depth)
    if not mask.all():
        raise ValueError(f"{what} contains invalid pixels")
    return values


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """H' x W' x C feature field, pixel-major with contiguous channels."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3:
            raise ValueError(f"feature tensor must be 3-D, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("feature tensor contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def centered(cls, width: int, height: int, focal: float | None = None) -> "CameraIntrinsics":
        f = float(focal if focal is not None else max(width, height))
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def rays(self) -> np.ndarray:
        """(H, W, 3) backprojection rays ((u-cx)/fx, (v-cy)/fy, 1)."""
        u = (np.arange(self.width, dtype=np.float64) - self.cx) / self.fx
        v = (np.arange(self.height, dtype=np.float64) - self.cy) / self.fy
        rays = np.ones((self.height, self.width, 3))
        rays[..., 0] = u[None, :]
        rays[..., 1] = v[:, None]
        return rays

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


class SeededRng:
    """splitmix64 generator; identical sequences on every platform."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        if not lo < hi:
            raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
        unit = (self.next_u64() >> 11) * 2.0 ** -53
        return lo + (hi - lo) * unit

    def uniform(self, size: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.next_uniform(lo, hi) for _ in range(size)])

    def normal(self, size: int) -> np.ndarray:
        # Box-Muller; 1 - u keeps the log argument in (0, 1].
        out = np.empty(size)
        for i in range(0, size, 2):
            u1 = 1.0 - self.next_uniform()
            u2 = self.next_uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            out[i] = r * math.cos(2.0 * math.pi * u2)
            if i + 1 < size:
                out[i + 1] = r * math.sin(2.0 * math.pi * u2)
        return out


def next_uniform(rng: SeededRng, lo: float, hi: float) -> float:
    return rng.next_uniform(lo, hi)


# -- PFM ---------------------------------------------------------------------

_PFM_HEADER = re.compile(rb"^(\S+)\s+(\S+)\s+(\S+)\s+(\S+)\s")


def read_pfm(path: str | os.PathLike) -> DepthGrid:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P"):
        raise DepthFormatError(f"{path}: not a PFM file")
    m = _PFM_HEADER.match(data[:256])
    if m is None:
        raise DepthFormatError(f"{path}: malformed PFM header")
    tag, w_tok, h_tok, scale_tok = m.groups()
    if tag == b"PF":
        raise DepthFormatError(f"{path}: color PFM unsupported")
    if tag != b"Pf":
        raise DepthFormatError(f"{path}: malformed PFM header (tag {tag!r})")
    try:
        width, height, scale = int(w_tok), int(h_tok), float(scale_tok)
    except ValueError as exc:
        raise DepthFormatError(f"{path}: malformed PFM header") from exc
    if width <= 0 or height <= 0 or scale == 0.0 or not math.isfinite(scale):
        raise DepthFormatError(f"{path}: malformed PFM header")
    if width * height > _MAX_PIXELS:
        raise DepthFormatError(f"{path}: PFM dimensions {width}x{height} overflow")
    payload = data[m.end():]
    nbytes = 4 * width * height
    if len(payload) < nbytes:
        raise DepthFormatError(f"{path}: truncated PFM payload "
                               f"({len(payload)} of {nbytes} bytes)")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(payload[:nbytes], dtype=dtype).reshape(height, width)
    return DepthGrid(np.flipud(values).astype(np.float32))


def write_pfm(grid: DepthLike, path: str | os.PathLike) -> None:
    if not str(path):
        raise OSError("empty output path")
    if not isinstance(grid, DepthGrid):
        grid = DepthGrid(grid)
    values = grid.values.copy()
    values[~grid.mask] = np.nan
    height, width = values.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(values).astype("<f4").tobytes())


# -- 16-bit PNG --------------------------------------------------------------

def read_png16(path: str | os.PathLike, scale: float = 0.001) -> DepthGrid:
    """Sensor-style depth: value v means v * scale meters, 0 means missing."""
    from PIL import Image

    with Image.open(path) as img:
        if img.mode not in ("I;16", "I;16B", "I;16L"):
            raise DepthFormatError(f"{path}: expected 16-bit single-channel PNG, "
                                   f"got mode {img.mode}")
        raw = np.array(img, dtype=np.uint16)
    values = raw.astype(np.float64) * scale
    return DepthGrid(values.astype(np.float32), mask=raw != 0)


def write_png16(grid: DepthLike, path: str | os.PathLike, scale: float = 0.001) -> None:
    from PIL import Image

    values, mask = as_values_mask(grid)
    raw = np.zeros(values.shape, dtype=np.uint16)
    raw[mask] = np.clip(np.rint(values[mask] / scale), 0, 65535).astype(np.uint16)
    Image.fromarray(raw).save(path)


# -- FTN1 feature tensors ----------------------------------------------------

_FTN1_MAGIC = b"FTN1"


def read_feature_tensor(path: str | os.PathLike) -> FeatureTensor:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:4] != _FTN1_MAGIC:
        raise DepthFormatError(f"{path}: bad FTN1 magic")
    h, w, c = struct.unpack("<III", data[4:16])
    count = h * w * c
    if h == 0 or w == 0 or c == 0 or count > _MAX_PIXELS:
        raise DepthFormatError(f"{path}: bad FTN1 dimensions {h}x{w}x{c}")
    payload = data[16:]
    if len(payload) != 4 * count:
        raise DepthFormatError(f"{path}: FTN1 size mismatch, declared {h}x{w}x{c} "
                               f"but found {len(payload) // 4} floats")
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return FeatureTensor(values.astype(np.float32))


def write_feature_tensor(tensor: FeatureTensor, path: str | os.PathLike) -> None:
    h, w, c = tensor.values.shape
    with open(path, "wb") as f:
        f.write(_FTN1_MAGIC + struct.pack("<III", h, w, c))
        f.write(tensor.values.astype("<f4").tobytes())


# -- intrinsics JSON ---------------------------------------------------------

def read_intrinsics(path: str | os.PathLike) -> CameraIntrinsics:
    with open(path) as f:
        obj = json.load(f)
    keys = {"fx", "fy", "cx", "cy", "width", "height"}
    if set(obj) != keys:
        raise DepthFormatError(f"{path}: intrinsics must have exactly keys {sorted(keys)}")
    return CameraIntrinsics(float(obj["fx"]), float(obj["fy"]), float(obj["cx"]),
                            float(obj["cy"]), int(obj["width"]), int(obj["height"]))


def write_intrinsics(K: CameraIntrinsics, path: str | os.PathLike) -> None:
    with open(path, "w") as f:
        json.dump(K.to_dict(), f, indent=2)
        f.write("\n")

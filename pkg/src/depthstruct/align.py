"""Affine-invariant normalization and least-squares scale/shift alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DepthGrid, DepthLike, as_values_mask


class DegenerateAlignmentError(ValueError):
    """The data cannot determine a normalization or an affine fit."""


@dataclass(frozen=True)
class AffineParams:
    """Maps normalized relative depth x to metric depth s * x + t."""

    s: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and math.isfinite(self.t)):
            raise ValueError("affine parameters must be finite")
        if self.s == 0.0:
            raise ValueError("affine scale must be nonzero")


def quantile_normalize(mono: DepthLike, lo_q: float = 0.02, hi_q: float = 0.98) -> DepthGrid:
    """Map valid pixels so the lo_q quantile goes to 0 and hi_q to 1.

    Quantiles interpolate linearly between order statistics of the valid
    pixels. Tails beyond the quantiles land outside [0, 1].
    """
    _, mask = as_values_mask(mono)
    return DepthGrid(normalize_values(mono, lo_q, hi_q), mask)


def normalize_values(mono: DepthLike, lo_q: float = 0.02, hi_q: float = 0.98) -> np.ndarray:
    """Like quantile_normalize, but returns float64 values (NaN where invalid)."""
    if not 0.0 <= lo_q < hi_q <= 1.0:
        raise ValueError(f"need 0 <= lo_q < hi_q <= 1, got {lo_q}, {hi_q}")
    values, mask = as_values_mask(mono)
    valid = values[mask]
    if valid.size < 2:
        raise DegenerateAlignmentError("fewer than 2 valid pixels")
    q_lo, q_hi = np.quantile(valid, [lo_q, hi_q])
    if not q_hi > q_lo:
        raise DegenerateAlignmentError("degenerate quantile range")
    return np.where(mask, (values - q_lo) / (q_hi - q_lo), np.nan)


def fit_scale_shift(mono_norm: DepthLike, mvs: DepthLike) -> AffineParams:
    """Closed-form least squares for s, t in  sum_p (s * mono(p) + t - mvs(p))^2.

    Only pixels valid in both grids take part. Uses the centered form of the
    2x2 normal equations, accumulated in float64.
    """
    x, mx = as_values_mask(mono_norm)
    y, my = as_values_mask(mvs)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    joint = mx & my
    n = int(joint.sum())
    if n < 2:
        raise DegenerateAlignmentError("fewer than 2 jointly-valid pixels")
    x = x[joint]
    y = y[joint]
    x_mean = x.sum() / n
    y_mean = y.sum() / n
    dx = x - x_mean
    sxx = float(np.dot(dx, dx))
    if sxx <= 0.0 or np.ptp(x) == 0.0:
        raise DegenerateAlignmentError("singular alignment system: constant mono depth")
    s = float(np.dot(dx, y - y_mean)) / sxx
    t = float(y_mean - s * x_mean)
    if s == 0.0:
        raise DegenerateAlignmentError("fitted scale is zero")
    return AffineParams(s, t)


def apply_affine(mono_norm: DepthLike, p: AffineParams) -> DepthGrid:
    values, mask = as_values_mask(mono_norm)
    return DepthGrid(np.where(mask, p.s * values + p.t, np.nan), mask)


def invert_affine(mvs: DepthLike, p: AffineParams) -> DepthGrid:
    if p.s == 0.0:
        raise ValueError("cannot invert an affine map with zero scale")
    values, mask = as_values_mask(mvs)
    return DepthGrid(np.where(mask, (values - p.t) / p.s, np.nan), mask)

"""SSIM, product-form MS-SSIM and pyramid SSIM (mean of per-level SSIM).

All statistics use a normalized Gaussian window in 'valid' placement, so a
grid must be at least ``2 * window_radius + 1`` pixels in each dimension at
every pyramid level it is evaluated on. Pyramid levels are produced by a
reflect-padded [1, 4, 6, 4, 1] / 16 binomial low-pass and 2x decimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._ops import (adjoint_sep, apply_sep, build_pyramid, pyramid_adjoint,
                   pyramid_shapes, valid_window_matrix)
from .core import DepthLike, as_full_array

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


class InfeasiblePyramidError(ValueError):
    """A pyramid level is smaller than the SSIM window."""


@dataclass(frozen=True)
class SsimConfig:
    window_radius: int = 5
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    # None: ssim() uses 1.0, ssim_loss() uses the value span of the reference.
    data_range: float | None = None

    def __post_init__(self):
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if not self.window_sigma > 0:
            raise ValueError("window_sigma must be > 0")
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("k1 and k2 must be > 0")
        if self.data_range is not None and not self.data_range > 0:
            raise ValueError("data_range must be > 0")

    @property
    def window_size(self) -> int:
        return 2 * self.window_radius + 1


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 4
    low_pass: str = "binomial5"

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.low_pass != "binomial5":
            raise ValueError(f"unknown low-pass filter {self.low_pass!r}")


def check_pyramid(shape: tuple[int, int], cfg: SsimConfig, levels: int) -> None:
    size = cfg.window_size
    for level, (h, w) in enumerate(pyramid_shapes(shape, levels), start=1):
        if h < size or w < size:
            raise InfeasiblePyramidError(
                f"pyramid level {level} is {h}x{w}, smaller than the "
                f"{size}x{size} SSIM window")


def _pair(x: DepthLike, y: DepthLike) -> tuple[np.ndarray, np.ndarray]:
    xa = as_full_array(x, "x")
    ya = as_full_array(y, "y")
    if xa.shape != ya.shape:
        raise ValueError(f"dimension mismatch: {xa.shape} vs {ya.shape}")
    return xa, ya


def _constants(cfg: SsimConfig, data_range: float) -> tuple[float, float]:
    return (cfg.k1 * data_range) ** 2, (cfg.k2 * data_range) ** 2


def _ssim_terms(x, y, cfg, c1, c2, need_grad=False):
    """Mean SSIM, mean contrast-structure term, and optionally d(mean SSIM)/dx."""
    wh = valid_window_matrix(x.shape[0], cfg.window_radius, cfg.window_sigma)
    ww = valid_window_matrix(x.shape[1], cfg.window_radius, cfg.window_sigma)
    mu_x = apply_sep(wh, x, ww)
    mu_y = apply_sep(wh, y, ww)
    e_xx = apply_sep(wh, x * x, ww)
    e_yy = apply_sep(wh, y * y, ww)
    e_xy = apply_sep(wh, x * y, ww)
    sxx = e_xx - mu_x * mu_x
    syy = e_yy - mu_y * mu_y
    sxy = e_xy - mu_x * mu_y

    n1 = 2.0 * mu_x * mu_y + c1
    n2 = 2.0 * sxy + c2
    d1 = mu_x * mu_x + mu_y * mu_y + c1
    d2 = sxx + syy + c2
    smap = (n1 * n2) / (d1 * d2)
    value = float(smap.mean())
    cs = float((n2 / d2).mean())
    if not need_grad:
        return value, cs, None

    # Chain rule through the window moments mu_x, E[x^2], E[xy].
    dd = d1 * d2
    d_mu = (2.0 * mu_y * n2 / dd - smap * 2.0 * mu_x / d1
            - 2.0 * mu_y * n1 / dd + smap * 2.0 * mu_x / d2)
    d_exx = -smap / d2
    d_exy = 2.0 * n1 / dd
    scale = 1.0 / smap.size
    grad = (adjoint_sep(wh, d_mu * scale, ww)
            + 2.0 * x * adjoint_sep(wh, d_exx * scale, ww)
            + y * adjoint_sep(wh, d_exy * scale, ww))
    return value, cs, grad


def ssim(x: DepthLike, y: DepthLike, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean Gaussian-window SSIM of two fully valid grids."""
    xa, ya = _pair(x, y)
    check_pyramid(xa.shape, cfg, 1)
    c1, c2 = _constants(cfg, cfg.data_range or 1.0)
    return _ssim_terms(xa, ya, cfg, c1, c2)[0]


def pyramid_ssim(x: DepthLike, y: DepthLike, cfg: SsimConfig = SsimConfig(),
                 pyr: PyramidConfig = PyramidConfig()) -> float:
    """Mean of single-scale SSIM over a binomial image pyramid."""
    xa, ya = _pair(x, y)
    return _pyramid_ssim(xa, ya, cfg, pyr, cfg.data_range or 1.0)[0]


def _pyramid_ssim(x, y, cfg, pyr, data_range, need_grad=False):
    check_pyramid(x.shape, cfg, pyr.levels)
    c1, c2 = _constants(cfg, data_range)
    xs = build_pyramid(x, pyr.levels)
    ys = build_pyramid(y, pyr.levels)
    total = 0.0
    grads = []
    for xl, yl in zip(xs, ys):
        value, _, g = _ssim_terms(xl, yl, cfg, c1, c2, need_grad)
        total += value
        grads.append(g)
    value = total / pyr.levels
    if not need_grad:
        return value, None
    grad = pyramid_adjoint([g / pyr.levels for g in grads])
    return value, grad


def ms_ssim(x: DepthLike, y: DepthLike, cfg: SsimConfig = SsimConfig(),
            pyr: PyramidConfig = PyramidConfig()) -> float:
    """Product-form MS-SSIM with the standard five-scale exponents.

    For fewer than five levels the leading exponents are renormalized to sum
    to one. Negative per-scale terms are clamped to zero before
    exponentiation.
    """
    xa, ya = _pair(x, y)
    if pyr.levels > len(MSSSIM_WEIGHTS):
        raise ValueError(f"MS-SSIM supports at most {len(MSSSIM_WEIGHTS)} levels")
    check_pyramid(xa.shape, cfg, pyr.levels)
    weights = np.array(MSSSIM_WEIGHTS[:pyr.levels])
    weights = weights / weights.sum()
    c1, c2 = _constants(cfg, cfg.data_range or 1.0)
    xs = build_pyramid(xa, pyr.levels)
    ys = build_pyramid(ya, pyr.levels)
    result = 1.0
    for level, (xl, yl, w) in enumerate(zip(xs, ys, weights), start=1):
        value, cs, _ = _ssim_terms(xl, yl, cfg, c1, c2)
        term = value if level == pyr.levels else cs
        result *= max(term, 0.0) ** w
    return float(result)


def resolve_data_range(cfg: SsimConfig, reference: np.ndarray) -> float:
    if cfg.data_range is not None:
        return cfg.data_range
    span = float(np.ptp(reference))
    return span if span > 0 else 1.0


def ssim_loss(mvs: DepthLike, mono_aligned: DepthLike, cfg: SsimConfig = SsimConfig(),
              pyr: PyramidConfig = PyramidConfig()) -> float:
    """1 - pyramid SSIM between an MVS depth and the aligned mono depth."""
    xa, ya = _pair(mvs, mono_aligned)
    return 1.0 - _pyramid_ssim(xa, ya, cfg, pyr, resolve_data_range(cfg, ya))[0]


def ssim_loss_gradient(mvs: DepthLike, mono_aligned: DepthLike,
                       cfg: SsimConfig = SsimConfig(),
                       pyr: PyramidConfig = PyramidConfig()) -> tuple[float, np.ndarray]:
    """(loss, d loss / d mvs). The aligned mono depth is a constant here."""
    xa, ya = _pair(mvs, mono_aligned)
    value, grad = _pyramid_ssim(xa, ya, cfg, pyr, resolve_data_range(cfg, ya),
                                need_grad=True)
    return 1.0 - value, -grad

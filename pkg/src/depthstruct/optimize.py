"""Direct depth optimization, finite-difference gradient checks, synthetic scenes."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .align import AffineParams, normalize_values
from .composite import (LossBreakdown, LossWeights, align_mono, mono_terms_fixed,
                        total_gradient)
from .core import CameraIntrinsics, DepthGrid, DepthLike, SeededRng, as_full_array
from .featsim import FilterBankExtractor, mono_feature_loss, mono_feature_loss_gradient, triplicate
from .metrics import evaluate
from .structsim import (InfeasiblePyramidError, PyramidConfig, SsimConfig, check_pyramid,
                        ssim_loss, ssim_loss_gradient)
from .suploss import (log_l1_loss, log_l1_loss_gradient, multi_scale_gradient_loss,
                      multi_scale_gradient_loss_gradient, normal_loss, normal_loss_gradient,
                      _normals)
from ._ops import build_pyramid

logger = logging.getLogger(__name__)

MIN_DEPTH_CLAMP = 1e-3
DIVERGENCE_LIMIT = 1e6
TRACE_HEADER = ["iter", "feat", "ssim", "mono", "sup", "unsup", "total", "absrel"]


class DivergenceError(RuntimeError):
    pass


def mono_only_weights(**overrides) -> LossWeights:
    """Default weights with the unsupervised and supervised terms off and no warm-up."""
    kw = dict(lambda_unsup=0.0, lambda_sup=0.0, mono_warmup_iters=0)
    kw.update(overrides)
    return LossWeights(**kw)


# 64x64 grids at 4 pyramid levels bottom out at 8x8, which an 11x11 window
# cannot cover.
DEMO_SSIM = SsimConfig(window_radius=3, window_sigma=1.0)


@dataclass(frozen=True)
class OptimizeConfig:
    iterations: int = 200
    step_size: float = 1e-2
    momentum: float = 0.9
    log_every: int = 1
    weights: LossWeights = field(default_factory=mono_only_weights)
    ssim: SsimConfig = DEMO_SSIM

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    breakdown: LossBreakdown
    abs_rel_vs_gt: float | None = None

    def csv_row(self) -> list:
        b = self.breakdown
        absrel = "" if self.abs_rel_vs_gt is None else repr(self.abs_rel_vs_gt)
        return [self.iteration] + [repr(v) for v in (b.feat_loss, b.ssim_loss, b.mono_loss,
                                                    b.sup_loss, b.unsup_loss, b.total_loss)] + [absrel]


def optimize_depth(init: DepthLike, mono_raw: DepthLike, gt: DepthLike | None,
                   K: CameraIntrinsics | None, ex: FilterBankExtractor,
                   cfg: OptimizeConfig = OptimizeConfig(),
                   reference: DepthLike | None = None) -> tuple[DepthGrid, list[TraceRow]]:
    """Heavy-ball gradient descent on the depth pixels themselves.

    Each iteration refits the mono alignment, evaluates the composite
    gradient with the alignment held fixed, and updates

        v <- grad + momentum * v;  D <- max(D - step_size * v, 1e-3)

    The returned trace has one row per `log_every` iterations plus a final
    row for the returned depth. abs-rel is reported against `reference`
    (default: `gt`) when one is available.
    """
    depth = as_full_array(init, "init").copy()
    reference = gt if reference is None else reference
    velocity = np.zeros_like(depth)
    trace: list[TraceRow] = []

    def record(it, breakdown):
        absrel = None
        if reference is not None:
            absrel = evaluate(depth, reference, 0.0, np.inf).abs_rel
        trace.append(TraceRow(it, breakdown, absrel))

    for it in range(cfg.iterations):
        breakdown, grad = total_gradient(depth, mono_raw, gt, K, ex, cfg.ssim, cfg.weights,
                                         iteration=it)
        if not np.isfinite(breakdown.total_loss) or breakdown.total_loss > DIVERGENCE_LIMIT:
            raise DivergenceError(f"loss {breakdown.total_loss:.3g} at iteration {it} "
                                  f"exceeds {DIVERGENCE_LIMIT:g}; lower the step size")
        if it % cfg.log_every == 0:
            record(it, breakdown)
            logger.debug("iter %d total %.6g", it, breakdown.total_loss)
        if cfg.step_size == 0:
            continue
        velocity = grad + cfg.momentum * velocity
        depth = np.maximum(depth - cfg.step_size * velocity, MIN_DEPTH_CLAMP)

    final, _ = total_gradient(depth, mono_raw, gt, K, ex, cfg.ssim, cfg.weights,
                              iteration=cfg.iterations)
    record(cfg.iterations, final)
    if cfg.step_size == 0 and isinstance(init, DepthGrid):
        return init, trace
    return DepthGrid(depth), trace


def write_trace_csv(trace: list[TraceRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER)
        for row in trace:
            writer.writerow(row.csv_row())


# -- synthetic scenes --------------------------------------------------------

SCENE_KINDS = ("plane", "boxes", "stairs")
SCENE_MIN, SCENE_MAX = 0.25, 5.0


def _plane(rng: SeededRng, K: CameraIntrinsics) -> np.ndarray:
    d0 = rng.next_uniform(1.5, 3.0)
    a = rng.next_uniform(-0.5, 0.5)
    b = rng.next_uniform(-0.5, 0.5)
    rays = K.rays()
    return d0 / (1.0 - a * rays[..., 0] - b * rays[..., 1])


def synth_scene(kind: str, dims: int | tuple[int, int], K: CameraIntrinsics,
                noise_sigma: float, seed: int) -> tuple[DepthGrid, DepthGrid, DepthGrid]:
    """(clean, noisy, mono_relative) depth grids for a seeded toy scene.

    clean lies in [0.25, 5] m. noisy adds Gaussian noise (floored at 1e-3 m).
    mono_relative = a * clean + b with a in [0.5, 2] and b in [-0.5, 0.5],
    b raised where needed so the result stays positive.
    """
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")
    h, w = (dims, dims) if isinstance(dims, int) else dims
    if h < 32 or w < 32:
        raise ValueError("synthetic scenes need at least 32x32 pixels")
    if (K.height, K.width) != (h, w):
        raise ValueError("intrinsics do not match the requested size")
    rng = SeededRng(seed)
    clean = _plane(rng, K)
    if kind == "boxes":
        for _ in range(3):
            y0 = int(rng.next_uniform(0, h - 8))
            x0 = int(rng.next_uniform(0, w - 8))
            bh = int(rng.next_uniform(6, h // 2))
            bw = int(rng.next_uniform(6, w // 2))
            factor = rng.next_uniform(0.5, 0.85)
            block = clean[y0:y0 + bh, x0:x0 + bw]
            clean[y0:y0 + bh, x0:x0 + bw] = factor * block.mean()
    elif kind == "stairs":
        n_steps = int(rng.next_uniform(3, 7))
        rise = rng.next_uniform(0.1, 0.4)
        step = np.floor(np.arange(h) * n_steps / h)
        clean = clean - rise * step[:, None]
    clean = np.clip(clean, SCENE_MIN, SCENE_MAX)

    noise = rng.normal(h * w).reshape(h, w) if noise_sigma > 0 else 0.0
    noisy = np.maximum(clean + noise_sigma * noise, MIN_DEPTH_CLAMP)

    a = rng.next_uniform(0.5, 2.0)
    b = rng.next_uniform(-0.5, 0.5)
    b = max(b, 0.01 - a * clean.min())
    mono = a * clean + b
    return DepthGrid(clean), DepthGrid(noisy), DepthGrid(mono)


# -- finite-difference gradient checks ---------------------------------------

GRAD_FAMILIES = ("ssim", "feat", "logl1", "msgrad", "normal", "composite")


@dataclass(frozen=True)
class GradCheckEntry:
    family: str
    size: tuple[int, int]
    max_rel_error: float
    attempts: int


@dataclass(frozen=True)
class GradCheckReport:
    entries: tuple[GradCheckEntry, ...]
    tolerance: float
    h: float

    @property
    def worst(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for e in self.entries:
            out[e.family] = max(out.get(e.family, 0.0), e.max_rel_error)
        return out

    @property
    def passed(self) -> bool:
        return all(e.max_rel_error <= self.tolerance for e in self.entries)

    def to_json_dict(self) -> dict:
        return {"h": self.h, "tolerance": self.tolerance, "pass": self.passed,
                "families": self.worst}


def central_differences(f: Callable[[np.ndarray], float], x: np.ndarray, h: float,
                        signature: Callable[[np.ndarray], np.ndarray] | None = None):
    """Per-pixel central differences of a scalar f.

    If `signature` is given, also reports whether any +-h probe changed it
    (i.e. crossed a kink of a piecewise-smooth loss).
    """
    grad = np.zeros_like(x)
    base = signature(x) if signature is not None else None
    crossed = False
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
        if base is not None and not crossed:
            crossed = (not np.array_equal(signature(xp), base)
                       or not np.array_equal(signature(xm), base))
    return grad, crossed


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max abs difference, relative to the larger of the two gradients' max magnitude."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    if scale == 0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def feasible_levels(shape: tuple[int, int], cfg: SsimConfig, max_levels: int = 4) -> int:
    for levels in range(max_levels, 0, -1):
        try:
            check_pyramid(shape, cfg, levels)
            return levels
        except InfeasiblePyramidError:
            continue
    raise InfeasiblePyramidError(f"{shape} is smaller than the SSIM window")


GRADCHECK_SSIM = SsimConfig(window_radius=2, window_sigma=1.0)


def _grad_signature_msgrad(pred, gt, levels):
    out = []
    for d in build_pyramid(pred - gt, levels):
        out.append(np.sign(d[:, 1:] - d[:, :-1]).ravel())
        out.append(np.sign(d[1:, :] - d[:-1, :]).ravel())
    return np.concatenate(out)


def _feat_signature(mvs, p: AffineParams, ex):
    return np.sign(ex.forward(triplicate((mvs - p.t) / p.s))["pre1"]).ravel()


def _fixture(family: str, shape, rng: SeededRng, ex: FilterBankExtractor):
    """(loss_fn, grad_fn, x, signature_fn) for one family on a seeded fixture."""
    h, w = shape
    K = CameraIntrinsics.centered(w, h)
    u = np.arange(w)[None, :] * np.ones((h, 1))
    v = np.arange(h)[:, None] * np.ones((1, w))

    def field(lo, hi):
        return rng.uniform(h * w, lo, hi).reshape(h, w)

    # Slow ramps with small noise keep |.| arguments and normal orientation
    # well away from their kinks.
    base = 2.0 + 0.02 * u + 0.01 * v + 0.01 * rng.normal(h * w).reshape(h, w)

    if family == "ssim":
        cfg = GRADCHECK_SSIM
        pyr = PyramidConfig(feasible_levels(shape, cfg))
        y = field(1.0, 2.0)
        return (lambda x: ssim_loss(x, y, cfg, pyr),
                lambda x: ssim_loss_gradient(x, y, cfg, pyr)[1],
                field(1.0, 2.0), None)
    if family == "feat":
        mono_norm = field(0.0, 1.0)
        p = AffineParams(rng.next_uniform(1.0, 3.0), rng.next_uniform(0.5, 1.0))
        x = p.s * field(0.0, 1.0) + p.t
        return (lambda x: mono_feature_loss(x, mono_norm, p, ex),
                lambda x: mono_feature_loss_gradient(x, mono_norm, p, ex)[1],
                x, lambda x: _feat_signature(x, p, ex))
    if family == "logl1":
        gt = field(0.5, 3.0)
        sign = np.where(field(0.0, 1.0) < 0.5, -1.0, 1.0)
        x = gt * np.exp(sign * field(0.1, 0.4))
        return (lambda x: log_l1_loss(x, gt),
                lambda x: log_l1_loss_gradient(x, gt)[1],
                x, lambda x: np.sign(np.log(x) - np.log(gt)).ravel())
    if family == "msgrad":
        gt = base
        x = gt + 0.5 * u + 0.7 * v + 0.05 * rng.normal(h * w).reshape(h, w)
        return (lambda x: multi_scale_gradient_loss(x, gt),
                lambda x: multi_scale_gradient_loss_gradient(x, gt)[1],
                x, lambda x: _grad_signature_msgrad(x, gt, 4))
    if family == "normal":
        gt = base
        x = gt + 0.02 * rng.normal(h * w).reshape(h, w)
        return (lambda x: normal_loss(x, gt, K),
                lambda x: normal_loss_gradient(x, gt, K)[1],
                x, lambda x: _normals(x, K)[1]["flip"].ravel())
    if family == "composite":
        cfg = GRADCHECK_SSIM
        weights = LossWeights(mono_warmup_iters=0,
                              pyramid_levels=feasible_levels(shape, cfg))
        gt = base
        x = gt + 0.1 + 0.05 * u + 0.07 * v + 0.005 * rng.normal(h * w).reshape(h, w)
        mono_raw = 3.0 * gt + field(0.0, 0.2)
        mono_norm, p = align_mono(x, mono_raw)

        def loss(x):
            mono = mono_terms_fixed(x, mono_norm, p, ex, cfg, weights)[0].mono_loss
            sup = (log_l1_loss(x, gt) + multi_scale_gradient_loss(x, gt)
                   + normal_loss(x, gt, K))
            return weights.lambda_mono * mono + weights.lambda_sup * sup

        def grad(x):
            return total_gradient(x, mono_raw, gt, K, ex, cfg, weights,
                                  iteration=0, params=p)[1]

        def signature(x):
            return np.concatenate([_feat_signature(x, p, ex),
                                   np.sign(np.log(x) - np.log(gt)).ravel(),
                                   _grad_signature_msgrad(x, gt, 4),
                                   _normals(x, K)[1]["flip"].ravel()])

        return loss, grad, x, signature
    raise ValueError(f"unknown gradient family {family!r}")


def grad_check(sizes=((16, 16),), seed: int = 0, h: float = 1e-3,
               tolerance: float = 1e-3, families=GRAD_FAMILIES,
               max_attempts: int = 20, extractor_seed: int = 42) -> GradCheckReport:
    """Compare analytic gradients with central differences on seeded fixtures.

    Fixtures whose probes cross a kink (leaky ReLU, |.|, normal flip) are
    redrawn with the next sub-seed.
    """
    if not 1e-5 <= h <= 1e-2:
        raise ValueError("h must lie in [1e-5, 1e-2]")
    ex = FilterBankExtractor(extractor_seed)
    entries = []
    for size in sizes:
        size = tuple(size)
        for fam_index, family in enumerate(families):
            for attempt in range(1, max_attempts + 1):
                rng = SeededRng(seed * 1_000_003 + fam_index * 1009 + attempt)
                loss, grad_fn, x, signature = _fixture(family, size, rng, ex)
                numeric, crossed = central_differences(loss, x, h, signature)
                if not crossed:
                    break
            err = relative_error(grad_fn(x), numeric)
            if crossed:
                err = max(err, np.inf)
            entries.append(GradCheckEntry(family, size, err, attempt))
    return GradCheckReport(tuple(entries), tolerance, h)

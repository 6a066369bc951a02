"""Weighted combination of the monocular, unsupervised and supervised terms.

The unsupervised term is an externally supplied scalar with no gradient. The
monocular term is switched on only once ``iteration >= mono_warmup_iters``,
so the scale/shift fit has something sensible to align against.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .align import AffineParams, fit_scale_shift, normalize_values
from .core import CameraIntrinsics, DepthLike, as_full_array
from .featsim import (FeatureSource, FilterBankExtractor, mono_feature_loss,
                      mono_feature_loss_gradient)
from .structsim import PyramidConfig, SsimConfig, ssim_loss, ssim_loss_gradient
from .suploss import supervised_loss, supervised_loss_gradient

_WEIGHT_KEYS = {
    "lambda_mono": "lambdaMono",
    "lambda_unsup": "lambdaUnsup",
    "lambda_sup": "lambdaSup",
    "alpha": "alpha",
    "unsup_components": "unsupComponents",
    "pyramid_levels": "pyramidLevels",
    "mono_warmup_iters": "monoWarmupIters",
}
_SSIM_KEYS = {
    "window_radius": "windowRadius",
    "window_sigma": "windowSigma",
    "k1": "k1",
    "k2": "k2",
    "data_range": "dataRange",
}
_BREAKDOWN_KEYS = {
    "feat_loss": "featLoss",
    "ssim_loss": "ssimLoss",
    "mono_loss": "monoLoss",
    "sup_loss": "supLoss",
    "unsup_loss": "unsupLoss",
    "total_loss": "totalLoss",
    "mono_active": "monoActive",
}


@dataclass(frozen=True)
class LossWeights:
    lambda_mono: float = 10.0
    lambda_unsup: float = 1.0
    lambda_sup: float = 10.0
    alpha: float = 1.0
    # Photometric / SSIM / smoothness / augmentation weights of the external
    # unsupervised loss. Stored for completeness; no kernel here uses them.
    unsup_components: tuple[float, float, float, float] = (12.0, 6.0, 18.0, 1.0)
    pyramid_levels: int = 4
    mono_warmup_iters: int = 1000

    def __post_init__(self):
        for name in ("lambda_mono", "lambda_unsup", "lambda_sup", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        comps = tuple(float(c) for c in self.unsup_components)
        if len(comps) != 4 or min(comps) < 0:
            raise ValueError("unsup_components must be four nonnegative values")
        object.__setattr__(self, "unsup_components", comps)
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.mono_warmup_iters < 0:
            raise ValueError("mono_warmup_iters must be >= 0")

    @property
    def pyramid(self) -> PyramidConfig:
        return PyramidConfig(self.pyramid_levels)


def config_from_json_dict(obj: dict, weights: LossWeights = LossWeights(),
                          ssim: SsimConfig = SsimConfig()) -> tuple[LossWeights, SsimConfig]:
    """Overlay a flat JSON config onto the given weights and SSIM settings.

    Unknown keys raise ValueError.
    """
    inv_w = {v: k for k, v in _WEIGHT_KEYS.items()}
    inv_s = {v: k for k, v in _SSIM_KEYS.items()}
    unknown = set(obj) - set(inv_w) - set(inv_s)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    w_kw = {inv_w[k]: v for k, v in obj.items() if k in inv_w}
    s_kw = {inv_s[k]: v for k, v in obj.items() if k in inv_s}
    w = LossWeights(**{**asdict(weights), **w_kw})
    s = SsimConfig(**{**asdict(ssim), **s_kw})
    return w, s


def config_to_json_dict(weights: LossWeights, ssim: SsimConfig) -> dict:
    out = {_WEIGHT_KEYS[k]: v for k, v in asdict(weights).items()}
    out["unsupComponents"] = list(weights.unsup_components)
    out.update({_SSIM_KEYS[k]: v for k, v in asdict(ssim).items()})
    return out


@dataclass(frozen=True)
class MonoTerms:
    feat_loss: float
    ssim_loss: float
    mono_loss: float
    params: AffineParams | None = None


@dataclass(frozen=True)
class LossBreakdown:
    feat_loss: float
    ssim_loss: float
    mono_loss: float
    sup_loss: float
    unsup_loss: float
    total_loss: float
    mono_active: bool

    def to_json_dict(self) -> dict:
        return {_BREAKDOWN_KEYS[f.name]: getattr(self, f.name) for f in fields(self)}


def align_mono(mvs: DepthLike, mono_raw: DepthLike) -> tuple[np.ndarray, AffineParams]:
    """Quantile-normalize the mono depth and fit it onto the MVS depth."""
    mono_norm = normalize_values(mono_raw)
    return mono_norm, fit_scale_shift(mono_norm, mvs)


def mono_terms_fixed(mvs: np.ndarray, mono_norm: np.ndarray, params: AffineParams,
                     src: FeatureSource, cfg: SsimConfig, w: LossWeights,
                     need_grad: bool = False):
    """Monocular term for a fixed alignment; gradient is w.r.t. mvs only."""
    aligned = params.s * mono_norm + params.t
    if need_grad:
        feat, g_feat = mono_feature_loss_gradient(mvs, mono_norm, params, src)
        ssim_l, g_ssim = ssim_loss_gradient(mvs, aligned, cfg, w.pyramid)
    else:
        feat = mono_feature_loss(mvs, mono_norm, params, src)
        ssim_l = ssim_loss(mvs, aligned, cfg, w.pyramid)
        g_feat = g_ssim = None
    terms = MonoTerms(feat, ssim_l, feat + w.alpha * ssim_l, params)
    if not need_grad:
        return terms, None
    return terms, g_feat + w.alpha * g_ssim


def mono_loss(mvs: DepthLike, mono_raw: DepthLike, src: FeatureSource,
              cfg: SsimConfig = SsimConfig(), w: LossWeights = LossWeights()) -> MonoTerms:
    """feature loss + alpha * (1 - pyramid SSIM) against the aligned mono depth."""
    mvs_a = as_full_array(mvs, "mvs")
    mono_norm, params = align_mono(mvs_a, mono_raw)
    return mono_terms_fixed(mvs_a, mono_norm, params, src, cfg, w)[0]


def total_loss(mono: float | MonoTerms, unsup: float, sup: float, iteration: int,
               w: LossWeights = LossWeights()) -> LossBreakdown:
    """lambda_mono * mono + lambda_unsup * unsup + lambda_sup * sup, with the
    mono term zeroed during warm-up.

    A bare float for `mono` is reported as the feature part with zero SSIM
    part.
    """
    if not isinstance(mono, MonoTerms):
        mono = MonoTerms(float(mono), 0.0, float(mono))
    active = iteration >= w.mono_warmup_iters
    total = w.lambda_unsup * unsup + w.lambda_sup * sup
    if active:
        total = w.lambda_mono * mono.mono_loss + total
    return LossBreakdown(mono.feat_loss, mono.ssim_loss, mono.mono_loss,
                         float(sup), float(unsup), float(total), active)


def _check_sup_inputs(gt, K):
    if (gt is None) != (K is None):
        raise ValueError("gt and intrinsics must be given together")


def loss_breakdown(mvs: DepthLike, mono_raw: DepthLike, src: FeatureSource,
                   gt: DepthLike | None = None, K: CameraIntrinsics | None = None,
                   cfg: SsimConfig = SsimConfig(), w: LossWeights = LossWeights(),
                   iteration: int = 0, unsup: float = 0.0) -> LossBreakdown:
    """All loss values for one sample, without gradients."""
    _check_sup_inputs(gt, K)
    if iteration >= w.mono_warmup_iters:
        mono = mono_loss(mvs, mono_raw, src, cfg, w)
    else:
        mono = MonoTerms(0.0, 0.0, 0.0)
    sup = supervised_loss(mvs, gt, K) if gt is not None else 0.0
    return total_loss(mono, unsup, sup, iteration, w)


def total_gradient(mvs: DepthLike, mono_raw: DepthLike, gt: DepthLike | None,
                   K: CameraIntrinsics | None, ex: FilterBankExtractor,
                   cfg: SsimConfig = SsimConfig(), w: LossWeights = LossWeights(),
                   iteration: int = 0, unsup: float = 0.0,
                   params: AffineParams | None = None) -> tuple[LossBreakdown, np.ndarray]:
    """Breakdown and d total / d mvs.

    The alignment is refit from `mvs` unless `params` is given; either way
    it is treated as a constant. During warm-up `mono_raw` is never read.
    """
    _check_sup_inputs(gt, K)
    mvs_a = as_full_array(mvs, "mvs")
    grad = np.zeros_like(mvs_a)
    active = iteration >= w.mono_warmup_iters
    mono = MonoTerms(0.0, 0.0, 0.0)
    if active:
        if params is None:
            mono_norm, params = align_mono(mvs_a, mono_raw)
        else:
            mono_norm = normalize_values(mono_raw)
        mono, g_mono = mono_terms_fixed(mvs_a, mono_norm, params, ex, cfg, w,
                                        need_grad=w.lambda_mono != 0)
        if w.lambda_mono != 0:
            grad = grad + w.lambda_mono * g_mono
    sup = 0.0
    if gt is not None:
        sup, g_sup = supervised_loss_gradient(mvs_a, gt, K)
        if w.lambda_sup != 0:
            grad = grad + w.lambda_sup * g_sup
    return total_loss(mono, unsup, sup, iteration, w), grad

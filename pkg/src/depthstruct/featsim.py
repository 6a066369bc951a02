"""Deep feature distance between depth "images".

A depth map is repeated into three channels, passed through a feature
extractor, normalized per pixel along channels, and compared by the mean
per-pixel l2 distance. The built-in extractor is a fixed, seeded two-layer
strided filter bank so the whole pipeline can be differentiated by hand.
External extractors plug in through FTN1 feature files.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ._ops import reflect_pad_matrix
from .align import AffineParams
from .core import (DepthLike, FeatureTensor, SeededRng, as_full_array,
                   read_feature_tensor)

DEFAULT_EPS = 1e-10
LEAKY_SLOPE = 0.1
# Per-pixel distances at or below this are roundoff of identical inputs; the
# distance is a cone there and 0 is taken as its subgradient.
DIST_FLOOR = 1e-12


class UnsupportedGradientError(RuntimeError):
    """Raised when a gradient is requested through an external extractor."""


def _glorot(rng: SeededRng, out_ch: int, in_ch: int, k: int = 3) -> np.ndarray:
    bound = math.sqrt(6.0 / (in_ch * k * k + out_ch * k * k))
    return rng.uniform(out_ch * in_ch * k * k, -bound, bound).reshape(out_ch, in_ch, k, k)


def _conv_s2(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 2, reflect padding 1, no bias. x is (C, H, W)."""
    _, h, wd = x.shape
    xp = reflect_pad_matrix(h, 1) @ x @ reflect_pad_matrix(wd, 1).T
    ho, wo = (h + 1) // 2, (wd + 1) // 2
    out = np.zeros((w.shape[0], ho, wo))
    for ky in range(3):
        for kx in range(3):
            patch = xp[:, ky:ky + 2 * ho:2, kx:kx + 2 * wo:2]
            out += np.tensordot(w[:, :, ky, kx], patch, axes=1)
    return out


def _conv_s2_backward(g: np.ndarray, w: np.ndarray, in_shape: tuple[int, int, int]) -> np.ndarray:
    c, h, wd = in_shape
    ho, wo = g.shape[1:]
    gp = np.zeros((c, h + 2, wd + 2))
    for ky in range(3):
        for kx in range(3):
            gp[:, ky:ky + 2 * ho:2, kx:kx + 2 * wo:2] += np.tensordot(w[:, :, ky, kx].T, g, axes=1)
    return reflect_pad_matrix(h, 1).T @ gp @ reflect_pad_matrix(wd, 1)


@dataclass(frozen=True, eq=False)
class FilterBankExtractor:
    """Seeded 3->16->32 channel extractor: conv/2, leaky ReLU, conv/2.

    Output is ceil(H/4) x ceil(W/4) x 32.
    """

    seed: int = 42
    layer1: np.ndarray = field(init=False, repr=False)
    layer2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = SeededRng(self.seed)
        w1 = _glorot(rng, 16, 3)
        w2 = _glorot(rng, 32, 16)
        w1.setflags(write=False)
        w2.setflags(write=False)
        object.__setattr__(self, "layer1", w1)
        object.__setattr__(self, "layer2", w2)

    def forward(self, img: np.ndarray) -> dict:
        """Run both layers on an (H, W, 3) image; returns all activations."""
        img = np.asarray(img, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) image, got {img.shape}")
        if img.shape[0] < 4 or img.shape[1] < 4:
            raise ValueError(f"input {img.shape[0]}x{img.shape[1]} is smaller than 4x4")
        x = np.moveaxis(img, 2, 0)
        pre1 = _conv_s2(x, self.layer1)
        act1 = np.where(pre1 > 0, pre1, LEAKY_SLOPE * pre1)
        out = _conv_s2(act1, self.layer2)
        return {"input": x, "pre1": pre1, "act1": act1, "out": out}

    def backward(self, acts: dict, g_out: np.ndarray, g_act1: np.ndarray | None = None) -> np.ndarray:
        """Gradient w.r.t. the (H, W, 3) input given output (and optional
        layer-1) gradients in (C, H', W') layout."""
        g1 = _conv_s2_backward(g_out, self.layer2, acts["act1"].shape)
        if g_act1 is not None:
            g1 = g1 + g_act1
        g1 = np.where(acts["pre1"] > 0, g1, LEAKY_SLOPE * g1)
        gx = _conv_s2_backward(g1, self.layer1, acts["input"].shape)
        return np.moveaxis(gx, 0, 2)

    def extract(self, img: np.ndarray) -> FeatureTensor:
        return FeatureTensor(np.moveaxis(self.forward(img)["out"], 0, 2))


@dataclass(frozen=True)
class ExternalFeatures:
    """Precomputed FTN1 features for the MVS side and the mono side."""

    pred_path: str | os.PathLike
    mono_path: str | os.PathLike


FeatureSource = Union[FilterBankExtractor, ExternalFeatures]


def triplicate(depth: DepthLike) -> np.ndarray:
    """Repeat a fully valid depth map into an (H, W, 3) image, unclamped."""
    d = as_full_array(depth)
    return np.repeat(d[:, :, None], 3, axis=2)


def extract_features(img: np.ndarray, ex: FilterBankExtractor) -> FeatureTensor:
    return ex.extract(img)


def channel_normalize(f: FeatureTensor | np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    v = np.asarray(f.values if isinstance(f, FeatureTensor) else f, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / (norm + eps)


def _distance(f: np.ndarray, g: np.ndarray, eps: float, need_grad: bool = False):
    """Mean l2 distance of channel-normalized (..., C) arrays and d/df."""
    nf = np.linalg.norm(f, axis=-1, keepdims=True)
    ng = np.linalg.norm(g, axis=-1, keepdims=True)
    diff = f / (nf + eps) - g / (ng + eps)
    dist = np.linalg.norm(diff, axis=-1, keepdims=True)
    count = dist.size
    loss = float(dist.sum() / count)
    if not need_grad:
        return loss, None
    active = dist > DIST_FLOOR
    safe = np.where(active, dist, 1.0)
    g_hat = np.where(active, diff / safe, 0.0) / count
    safe_n = np.where(nf > 0, nf, 1.0)
    radial = f * np.sum(f * g_hat, axis=-1, keepdims=True) / (safe_n * (nf + eps) ** 2)
    grad = g_hat / (nf + eps) - np.where(nf > 0, radial, 0.0)
    return loss, grad


def feature_loss(f: FeatureTensor | np.ndarray, f_star: FeatureTensor | np.ndarray,
                 eps: float = DEFAULT_EPS) -> float:
    """Mean over pixels of || f/|f| - f*/|f*| ||, in [0, 2]."""
    a = np.asarray(f.values if isinstance(f, FeatureTensor) else f, dtype=np.float64)
    b = np.asarray(f_star.values if isinstance(f_star, FeatureTensor) else f_star, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    return _distance(a, b, eps)[0]


def _mvs_image(mvs: DepthLike, p: AffineParams) -> np.ndarray:
    return triplicate((as_full_array(mvs, "mvs") - p.t) / p.s)


def mono_feature_loss(mvs: DepthLike, mono_norm: DepthLike, p: AffineParams,
                      src: FeatureSource, eps: float = DEFAULT_EPS) -> float:
    """Feature distance between the MVS depth mapped back into the mono
    range and the normalized mono depth."""
    if isinstance(src, ExternalFeatures):
        f = read_feature_tensor(src.pred_path)
        f_star = read_feature_tensor(src.mono_path)
        if f.values.shape != f_star.values.shape:
            raise ValueError("external feature tensors differ in shape: "
                             f"{f.values.shape} vs {f_star.values.shape}")
        return feature_loss(f, f_star, eps)
    f = src.forward(_mvs_image(mvs, p))["out"]
    f_star = src.forward(triplicate(mono_norm))["out"]
    return _distance(np.moveaxis(f, 0, 2), np.moveaxis(f_star, 0, 2), eps)[0]


def mono_feature_loss_gradient(mvs: DepthLike, mono_norm: DepthLike, p: AffineParams,
                               ex: FeatureSource,
                               eps: float = DEFAULT_EPS) -> tuple[float, np.ndarray]:
    """(loss, d loss / d mvs) with the mono branch and (s, t) held fixed."""
    if not isinstance(ex, FilterBankExtractor):
        raise UnsupportedGradientError("no gradient through external features")
    acts = ex.forward(_mvs_image(mvs, p))
    f_star = ex.forward(triplicate(mono_norm))["out"]
    loss, g = _distance(np.moveaxis(acts["out"], 0, 2), np.moveaxis(f_star, 0, 2),
                        eps, need_grad=True)
    g_img = ex.backward(acts, np.moveaxis(g, 2, 0))
    return loss, g_img.sum(axis=2) / p.s


def multi_layer_feature_loss(mvs: DepthLike, mono_norm: DepthLike, p: AffineParams,
                             ex: FilterBankExtractor, eps: float = DEFAULT_EPS) -> float:
    """Mean of the normalized distances at both extractor layers."""
    a = ex.forward(_mvs_image(mvs, p))
    b = ex.forward(triplicate(mono_norm))
    losses = [_distance(np.moveaxis(a[k], 0, 2), np.moveaxis(b[k], 0, 2), eps)[0]
              for k in ("act1", "out")]
    return sum(losses) / 2.0

"""Supervised depth losses: log-l1 regression, multi-scale gradient, normals.

The multi-scale gradient loss sums (does not average) over pixels at every
pyramid level, so its magnitude grows with resolution. Pass
``reduction="mean"`` to average per level instead.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ._ops import build_pyramid, pyramid_adjoint, pyramid_shapes
from .core import CameraIntrinsics, DepthLike, as_full_array, as_values_mask

GRADIENT_LEVELS = 4


class NonPositiveDepthError(ValueError):
    pass


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def log_l1_loss(pred: DepthLike, gt: DepthLike) -> float:
    return log_l1_loss_gradient(pred, gt, need_grad=False)[0]


def log_l1_loss_gradient(pred: DepthLike, gt: DepthLike, need_grad: bool = True):
    """Mean |log pred - log gt| over jointly valid pixels, and d/dpred."""
    p, mp = as_values_mask(pred)
    g, mg = as_values_mask(gt)
    _check_same(p, g)
    joint = mp & mg
    n = int(joint.sum())
    if n == 0:
        raise ValueError("no jointly valid pixels")
    if (p[joint] <= 0).any() or (g[joint] <= 0).any():
        raise NonPositiveDepthError("log-l1 loss needs positive depth")
    r = np.log(p[joint]) - np.log(g[joint])
    loss = float(np.abs(r).sum() / n)
    if not need_grad:
        return loss, None
    grad = np.zeros_like(p)
    grad[joint] = np.sign(r) / (p[joint] * n)
    return loss, grad


def _check_gradient_pyramid(shape, levels):
    for level, (h, w) in enumerate(pyramid_shapes(shape, levels), start=1):
        if h < 2 or w < 2:
            raise ValueError(f"gradient pyramid level {level} is {h}x{w}; need >= 2x2")


def multi_scale_gradient_loss(pred: DepthLike, gt: DepthLike, levels: int = GRADIENT_LEVELS,
                              reduction: str = "sum") -> float:
    return multi_scale_gradient_loss_gradient(pred, gt, levels, reduction, need_grad=False)[0]


def multi_scale_gradient_loss_gradient(pred: DepthLike, gt: DepthLike,
                                       levels: int = GRADIENT_LEVELS,
                                       reduction: str = "sum", need_grad: bool = True):
    """Sum over levels of |dx diff| + |dy diff| with forward differences of
    the downsampled difference map; the last row/column has no difference."""
    if reduction not in ("sum", "mean"):
        raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    p = as_full_array(pred, "pred")
    g = as_full_array(gt, "gt")
    _check_same(p, g)
    _check_gradient_pyramid(p.shape, levels)
    # Downsampling is linear, so the per-level difference is the downsampled difference.
    diffs = build_pyramid(p - g, levels)
    loss = 0.0
    grads = []
    for d in diffs:
        gx = d[:, 1:] - d[:, :-1]
        gy = d[1:, :] - d[:-1, :]
        w = 1.0 if reduction == "sum" else 1.0 / d.size
        loss += w * (np.abs(gx).sum() + np.abs(gy).sum())
        if need_grad:
            sx = w * np.sign(gx)
            sy = w * np.sign(gy)
            gd = np.zeros_like(d)
            gd[:, 1:] += sx
            gd[:, :-1] -= sx
            gd[1:, :] += sy
            gd[:-1, :] -= sy
            grads.append(gd)
    if not need_grad:
        return float(loss), None
    return float(loss), pyramid_adjoint(grads)


@lru_cache(maxsize=None)
def _tangent_matrix(n: int) -> np.ndarray:
    """Central differences inside, one-sided differences at both ends."""
    m = np.zeros((n, n))
    for i in range(n):
        hi = min(i + 1, n - 1)
        lo = max(i - 1, 0)
        m[i, hi] += 1.0
        m[i, lo] -= 1.0
    m.setflags(write=False)
    return m


def _normals(depth: np.ndarray, K: CameraIntrinsics):
    if depth.shape != (K.height, K.width):
        raise ValueError(f"depth {depth.shape} does not match intrinsics "
                         f"{K.height}x{K.width}")
    if (depth <= 0).any():
        raise NonPositiveDepthError("normals need positive depth")
    if min(depth.shape) < 2:
        raise ValueError("normals need at least 2x2 pixels")
    rays = K.rays()
    points = depth[:, :, None] * rays
    cu = _tangent_matrix(depth.shape[1])
    cv = _tangent_matrix(depth.shape[0])
    t_u = np.einsum("wk,hkc->hwc", cu, points)
    t_v = np.einsum("hk,kwc->hwc", cv, points)
    c = np.cross(t_u, t_v)
    norm = np.linalg.norm(c, axis=-1, keepdims=True)
    # Camera-facing convention: n_z <= 0.
    flip = np.where(c[..., 2:3] > 0, -1.0, 1.0)
    n = flip * c / norm
    return n, {"rays": rays, "t_u": t_u, "t_v": t_v, "c": c, "norm": norm,
               "flip": flip, "cu": cu, "cv": cv}


def normals_from_depth(depth: DepthLike, K: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) unit normals of the backprojected surface, facing the camera."""
    return _normals(as_full_array(depth), K)[0]


def _normals_backward(g_n: np.ndarray, cache: dict) -> np.ndarray:
    c, norm, flip = cache["c"], cache["norm"], cache["flip"]
    g_c = flip * (g_n / norm - c * np.sum(c * g_n, axis=-1, keepdims=True) / norm ** 3)
    g_tu = np.cross(cache["t_v"], g_c)
    g_tv = np.cross(g_c, cache["t_u"])
    g_p = (np.einsum("wk,hwc->hkc", cache["cu"], g_tu)
           + np.einsum("hk,hwc->kwc", cache["cv"], g_tv))
    return np.sum(g_p * cache["rays"], axis=-1)


def normal_agreement_loss(n: np.ndarray, n_gt: np.ndarray) -> float:
    """sum_p (1 - n . n_gt) / (2 * pixels) for (H, W, 3) unit-normal fields."""
    n = np.asarray(n, dtype=np.float64)
    n_gt = np.asarray(n_gt, dtype=np.float64)
    _check_same(n, n_gt)
    # 1 - n.m == |n - m|^2 / 2 for unit vectors; this form is exactly 0 when n == m.
    return float(np.sum((n - n_gt) ** 2) / (4.0 * n.shape[0] * n.shape[1]))


def normal_loss(pred: DepthLike, gt: DepthLike, K: CameraIntrinsics) -> float:
    return normal_loss_gradient(pred, gt, K, need_grad=False)[0]


def normal_loss_gradient(pred: DepthLike, gt: DepthLike, K: CameraIntrinsics,
                         need_grad: bool = True):
    """sum_p (1 - N . N_gt) / (2HW), in [0, 1], and d/dpred."""
    p = as_full_array(pred, "pred")
    g = as_full_array(gt, "gt")
    _check_same(p, g)
    n_pred, cache = _normals(p, K)
    n_gt = _normals(g, K)[0]
    denom = 2.0 * p.size
    loss = normal_agreement_loss(n_pred, n_gt)
    if not need_grad:
        return loss, None
    return loss, _normals_backward((n_pred - n_gt) / denom, cache)


def supervised_loss(pred: DepthLike, gt: DepthLike, K: CameraIntrinsics) -> float:
    return (log_l1_loss(pred, gt) + multi_scale_gradient_loss(pred, gt, GRADIENT_LEVELS)
            + normal_loss(pred, gt, K))


def supervised_loss_gradient(pred: DepthLike, gt: DepthLike,
                             K: CameraIntrinsics) -> tuple[float, np.ndarray]:
    l_regr, g_regr = log_l1_loss_gradient(pred, gt)
    l_grad, g_grad = multi_scale_gradient_loss_gradient(pred, gt, GRADIENT_LEVELS)
    l_norm, g_norm = normal_loss_gradient(pred, gt, K)
    return l_regr + l_grad + l_norm, g_regr + g_grad + g_norm

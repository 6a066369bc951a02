"""Separable linear operators as small dense matrices.

A separable 2-D operator is applied as ``Mh @ X @ Mw.T``; its adjoint is
``Mh.T @ G @ Mw``. Keeping both directions on the same matrices is what makes
the hand-written backward passes exact.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def reflect_index(n: int, pad: int) -> np.ndarray:
    """Source indices of a length-n signal padded by `pad` with edge mirroring
    (edge sample not repeated, same as ``np.pad(mode="reflect")``)."""
    idx = np.arange(-pad, n + pad)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def _frozen(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def gaussian_kernel(radius: int, sigma: float) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return _frozen(k / k.sum())


@lru_cache(maxsize=None)
def valid_window_matrix(n: int, radius: int, sigma: float) -> np.ndarray:
    """(n - 2r, n) matrix of the Gaussian window in 'valid' placement."""
    k = gaussian_kernel(radius, sigma)
    size = 2 * radius + 1
    m = np.zeros((n - size + 1, n))
    for i in range(n - size + 1):
        m[i, i:i + size] = k
    return _frozen(m)


@lru_cache(maxsize=None)
def downsample_matrix(n: int) -> np.ndarray:
    """(ceil(n/2), n) matrix: reflect-pad by 2, binomial [1,4,6,4,1]/16,
    keep every second sample starting at 0."""
    src = reflect_index(n, 2)
    n_out = (n + 1) // 2
    m = np.zeros((n_out, n))
    for i in range(n_out):
        for k, w in enumerate(BINOMIAL5):
            m[i, src[2 * i + k]] += w
    return _frozen(m)


@lru_cache(maxsize=None)
def reflect_pad_matrix(n: int, pad: int) -> np.ndarray:
    """(n + 2*pad, n) selection matrix for mirror padding."""
    src = reflect_index(n, pad)
    m = np.zeros((n + 2 * pad, n))
    m[np.arange(src.size), src] = 1.0
    return _frozen(m)


def apply_sep(mh: np.ndarray, x: np.ndarray, mw: np.ndarray) -> np.ndarray:
    return mh @ x @ mw.T


def adjoint_sep(mh: np.ndarray, g: np.ndarray, mw: np.ndarray) -> np.ndarray:
    return mh.T @ g @ mw


def pyramid_shapes(shape: tuple[int, int], levels: int) -> list[tuple[int, int]]:
    """Grid shape at each pyramid level; level 1 is the input itself."""
    shapes = [tuple(shape)]
    for _ in range(levels - 1):
        h, w = shapes[-1]
        shapes.append(((h + 1) // 2, (w + 1) // 2))
    return shapes


def build_pyramid(x: np.ndarray, levels: int) -> list[np.ndarray]:
    out = [x]
    for _ in range(levels - 1):
        cur = out[-1]
        out.append(apply_sep(downsample_matrix(cur.shape[0]), cur,
                             downsample_matrix(cur.shape[1])))
    return out


def pyramid_adjoint(grads: list[np.ndarray]) -> np.ndarray:
    """Sum of P_l^T g_l over levels, where P_l is the level-l downsampler."""
    acc = grads[-1]
    for g in reversed(grads[:-1]):
        h, w = g.shape
        acc = g + adjoint_sep(downsample_matrix(h), acc, downsample_matrix(w))
    return acc

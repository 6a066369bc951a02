"""Slow, direct reference computations used only by the tests.

None of these reuse the package's operator matrices, so they check the fast
paths independently.
"""

import math

import numpy as np


def gaussian_window_2d(radius, sigma):
    k = np.array([math.exp(-0.5 * (i / sigma) ** 2) for i in range(-radius, radius + 1)])
    w = np.outer(k, k)
    return w / w.sum()


def ssim_brute(x, y, radius=5, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean SSIM by explicit per-window weighted statistics."""
    w = gaussian_window_2d(radius, sigma)
    size = 2 * radius + 1
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            px = x[i:i + size, j:j + size]
            py = y[i:i + size, j:j + size]
            mx = np.sum(w * px)
            my = np.sum(w * py)
            vx = np.sum(w * (px - mx) ** 2)
            vy = np.sum(w * (py - my) ** 2)
            cxy = np.sum(w * (px - mx) * (py - my))
            vals.append((2 * mx * my + c1) * (2 * cxy + c2)
                        / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def downsample_brute(x):
    """Reflect pad by 2, 5x5 binomial, keep even rows/columns."""
    k = np.array([1, 4, 6, 4, 1], dtype=float) / 16
    k2 = np.outer(k, k)
    xp = np.pad(x, 2, mode="reflect")
    out = np.zeros(x.shape)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            out[i, j] = np.sum(k2 * xp[i:i + 5, j:j + 5])
    return out[::2, ::2]


def pyramid_brute(x, levels):
    out = [x]
    for _ in range(levels - 1):
        out.append(downsample_brute(out[-1]))
    return out


def conv3x3_s2_brute(x, w):
    """x: (C, H, W), w: (O, C, 3, 3); reflect pad 1, stride 2, no bias."""
    c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    ho, wo = (h + 1) // 2, (wd + 1) // 2
    out = np.zeros((w.shape[0], ho, wo))
    for o in range(w.shape[0]):
        for i in range(ho):
            for j in range(wo):
                out[o, i, j] = np.sum(w[o] * xp[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3])
    return out


def extractor_brute(img, w1, w2, slope=0.1):
    x = np.moveaxis(img, 2, 0)
    pre = conv3x3_s2_brute(x, w1)
    act = np.where(pre > 0, pre, slope * pre)
    return act, conv3x3_s2_brute(act, w2)


def quantile_type7(values, q):
    v = np.sort(np.asarray(values, dtype=float).ravel())
    pos = (v.size - 1) * q
    lo = int(math.floor(pos))
    hi = min(lo + 1, v.size - 1)
    return v[lo] + (pos - lo) * (v[hi] - v[lo])


def normal_equations(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    sx, sy, sxy, sxx = x.sum(), y.sum(), (x * y).sum(), (x * x).sum()
    s = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    return s, (sy - s * sx) / n


def central_fd(f, x, h=1e-3):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def tilted_plane_depth(K, d0, a):
    """Depth of the plane z = d0 + a * X seen through intrinsics K."""
    u = (np.arange(K.width) - K.cx) / K.fx
    ray_x = np.broadcast_to(u[None, :], (K.height, K.width))
    return d0 / (1.0 - a * ray_x)

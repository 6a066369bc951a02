"""
Aligning relative depth to metric depth
=======================================

A monocular network predicts depth only up to an unknown scale and shift.
Here we normalize such a prediction by its 2nd/98th percentiles and fit the
scale and shift that map it onto a metric depth map.
"""

import numpy as np

from depthstruct import (CameraIntrinsics, DepthGrid, fit_scale_shift, quantile_normalize,
                         synth_scene)
from depthstruct.align import apply_affine

K = CameraIntrinsics.centered(64, 64)
clean, noisy, mono = synth_scene("stairs", 64, K, noise_sigma=0.02, seed=3)

print("metric depth range  : %.3f .. %.3f m" % (clean.values.min(), clean.values.max()))
print("mono depth range    : %.3f .. %.3f (arbitrary units)" % (mono.values.min(), mono.values.max()))

# Quantile normalization puts the 2nd percentile at 0 and the 98th at 1,
# so the fit below works on a fixed, outlier-robust scale.
mono_norm = quantile_normalize(mono)
print("normalized range    : %.3f .. %.3f" % (mono_norm.values.min(), mono_norm.values.max()))

# Closed-form least squares against the (noisy) metric depth.
params = fit_scale_shift(mono_norm, noisy)
print("fitted s, t         : %.4f, %.4f" % (params.s, params.t))

aligned = apply_affine(mono_norm, params)
err = np.abs(aligned.values - clean.values)
print("aligned vs clean    : mean %.4f m, max %.4f m" % (err.mean(), err.max()))

# %%
# Invalid pixels are simply left out of both the quantiles and the fit.
mask = np.ones(mono.shape, dtype=bool)
mask[:, :16] = False
partial = fit_scale_shift(quantile_normalize(DepthGrid(mono.values, mask)), noisy)
print("fit on 3/4 of pixels: %.4f, %.4f" % (partial.s, partial.t))

"""
Feature-space distance between depth maps
=========================================

Depth maps are repeated into three channels, passed through a small seeded
filter bank, normalized per pixel and compared by mean l2 distance.
"""

import numpy as np

from depthstruct import AffineParams, FilterBankExtractor, feature_loss, triplicate
from depthstruct.featsim import mono_feature_loss_gradient

ex = FilterBankExtractor(seed=42)
y, x = np.mgrid[0:32, 0:32] / 32.0
mono_norm = 0.2 + 0.6 * x * (y > 0.5) + 0.3 * y

for name, other in [("identical", mono_norm),
                    ("scaled x3", 3.0 * mono_norm),
                    ("blurred edge", 0.2 + 0.6 * x * np.clip(4 * (y - 0.375), 0, 1) + 0.3 * y),
                    ("noise", mono_norm + np.random.default_rng(1).normal(0, 0.05, mono_norm.shape))]:
    f = ex.extract(triplicate(other))
    g = ex.extract(triplicate(mono_norm))
    print("%-13s feature loss %.4f" % (name, feature_loss(f, g)))

# %%
# Per-pixel normalization makes the loss blind to a global depth scale, but
# not to shifts or to changes in local structure. The gradient with respect
# to a metric depth map flows back through the affine map (1/s) and both
# convolutions.
p = AffineParams(2.0, 0.5)
mvs = p.s * mono_norm + p.t + np.random.default_rng(2).normal(0, 0.02, mono_norm.shape)
loss, grad = mono_feature_loss_gradient(mvs, mono_norm, p, ex)
print("loss %.4f, gradient norm %.4f" % (loss, np.linalg.norm(grad)))

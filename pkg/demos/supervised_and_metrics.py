"""
Supervised losses and evaluation metrics
========================================

Score a noisy depth map against ground truth with the log-l1, multi-scale
gradient and surface-normal losses, then with the usual depth metrics.
"""

import numpy as np

from depthstruct import (CameraIntrinsics, evaluate, log_l1_loss, multi_scale_gradient_loss,
                         normal_loss, normals_from_depth, synth_scene)

K = CameraIntrinsics.centered(64, 64)
gt, noisy, _ = synth_scene("boxes", 64, K, noise_sigma=0.05, seed=11)

print("log-l1            %.4f" % log_l1_loss(noisy, gt))
print("gradient (sum)    %.2f" % multi_scale_gradient_loss(noisy, gt))
print("gradient (mean)   %.4f" % multi_scale_gradient_loss(noisy, gt, reduction="mean"))
print("normal            %.4f" % normal_loss(noisy.values, gt.values, K))

# %%
# Normals come from backprojected points; a flat wall facing the camera
# has normal (0, 0, -1).
n = normals_from_depth(np.full((64, 64), 2.0), K)
print("fronto-parallel normal:", n[32, 32])

# %%
# Metrics count only pixels whose ground truth lies in [0.25, 5] m.
report = evaluate(noisy, gt)
for key, value in report.to_json_dict().items():
    print("%-11s %s" % (key, value))

"""Structure-transfer losses and evaluation metrics for depth maps.

Monocular relative depth is aligned to a metric depth estimate and compared
through a deep feature distance and a pyramid SSIM; supervised log-l1,
multi-scale gradient and normal losses, standard depth metrics, and a small
direct-optimization demo round it out. Every loss has an analytic gradient.
"""

from .align import (AffineParams, DegenerateAlignmentError, apply_affine, fit_scale_shift,
                    invert_affine, quantile_normalize)
from .composite import (LossBreakdown, LossWeights, MonoTerms, loss_breakdown, mono_loss,
                        total_gradient, total_loss)
from .core import (CameraIntrinsics, DepthFormatError, DepthGrid, FeatureTensor, SeededRng,
                   read_feature_tensor, read_intrinsics, read_pfm, read_png16,
                   write_feature_tensor, write_intrinsics, write_pfm)
from .featsim import (ExternalFeatures, FilterBankExtractor, channel_normalize,
                      extract_features, feature_loss, mono_feature_loss,
                      mono_feature_loss_gradient, multi_layer_feature_loss, triplicate)
from .metrics import MetricReport, aggregate, evaluate
from .optimize import (OptimizeConfig, TraceRow, grad_check, mono_only_weights,
                       optimize_depth, synth_scene)
from .structsim import (PyramidConfig, SsimConfig, ms_ssim, pyramid_ssim, ssim,
                        ssim_loss, ssim_loss_gradient)
from .suploss import (log_l1_loss, multi_scale_gradient_loss, normal_agreement_loss,
                      normal_loss, normals_from_depth, supervised_loss, supervised_loss_gradient)

__version__ = "0.1.0"

"""Cylindrical-panorama structure-from-motion toolkit.

Camera geometry for 360-degree cylindrical panoramas, horizontally wrapping
image operations, photometric view synthesis, direct optimization of depth
and ego-motion, evaluation metrics, and dataset preparation.
"""

from .geometry import (
    CylindricalCamera,
    PinholeCamera,
    Pose,
    cyl_project,
    cyl_to_pixel,
    cyl_unproject,
    pinhole_project,
    pinhole_unproject,
    pixel_to_cyl,
    pose_transform,
    wrap_angle,
)
from .metrics import DepthMetrics, ate, depth_metrics
from .optim import OptimConfig, numeric_gradient, optimize_alternating, optimize_depth, optimize_pose
from .panorama import (
    DepthMap,
    ExplainabilityMask,
    Panorama,
    conv2d_wrap,
    downsample_depth_pyramid,
    downsample_pyramid,
    sample_bilinear,
    sample_bilinear_wrap,
    wrap_pad,
)
from .synthesis import (
    LossBreakdown,
    LossWeights,
    explainability_loss,
    inverse_warp,
    photometric_loss,
    smooth_loss_2nd,
    smooth_loss_image_aware,
    total_loss,
)

__version__ = "0.1.0"

"""Projective inverse warping and the photometric/smoothness/explainability losses.

A target view is synthesized from a source panorama by unprojecting every
target pixel at its depth, moving the point into the source frame with a
rigid transform, reprojecting onto the cylinder, and sampling the source
bilinearly with horizontal wrap.  The total training objective sums, over
pyramid scales, the per-source photometric error plus weighted smoothness
and explainability regularizers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import TWO_PI, CylindricalCamera, Pose, pixel_to_cyl, wrap_angle
from .panorama import (
    DepthMap,
    ExplainabilityMask,
    Panorama,
    downsample_mask_pyramid,
    downsample_pyramid,
    sample_bilinear,
)

LOG_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Objective weights: smoothness, explainability, image-aware smoothness.

    The two smoothness flavors are alternatives: lambda_m > 0 switches the
    smooth term to the image-aware version (weighted by lambda_m) and
    requires lambda_s == 0, otherwise the plain second-order term applies
    with weight lambda_s.
    """

    lambda_s: float = 2.0
    lambda_e: float = 0.0
    lambda_m: float = 0.0
    scales: int = 4

    def __post_init__(self):
        if self.lambda_s < 0 or self.lambda_e < 0 or self.lambda_m < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.scales < 1:
            raise ValueError(f"scales must be >= 1, got {self.scales}")
        if self.lambda_s > 0 and self.lambda_m > 0:
            raise ValueError("lambda_s and lambda_m are mutually exclusive smoothness weights")

    @property
    def image_aware(self) -> bool:
        return self.lambda_m > 0

    @property
    def smooth_weight(self) -> float:
        return self.lambda_m if self.image_aware else self.lambda_s


@dataclass(frozen=True)
class LossTerms:
    pixel: float
    smooth: float
    explain: float
    total: float


@dataclass(frozen=True)
class LossBreakdown:
    """Loss components accumulated over scales, plus the per-scale terms.

    ``total = sum over scales of (pixel + w_smooth * smooth + lambda_e * explain)``
    where ``w_smooth`` is the active smoothness weight.
    """

    pixel: float
    smooth: float
    explain: float
    total: float
    per_scale: list[LossTerms] = field(default_factory=list)


def warp_coordinates(target_depth: DepthMap, pose: Pose, cam: CylindricalCamera):
    """Source-image sample position for every target pixel.

    ``pose`` takes target-frame coordinates to source-frame coordinates.
    Returns continuous pixel coordinates ``(x, y)`` plus the geometric
    validity mask (target depth valid, transformed point off the axis).
    """
    h, w = target_depth.height_px, target_depth.width_px
    rows, cols = np.mgrid[0:h, 0:w].astype(float)
    theta, hh = pixel_to_cyl(cols, rows, cam)

    d = target_depth.depth
    pts = np.stack([d * np.sin(theta), d * hh, d * np.cos(theta)], axis=-1)
    pts = pose.transform(pts)

    radial = np.hypot(pts[..., 0], pts[..., 2])
    valid = target_depth.valid & (radial > 0.0)
    theta_s = wrap_angle(np.arctan2(pts[..., 0], pts[..., 2]))
    h_s = pts[..., 1] / np.where(radial > 0.0, radial, 1.0)

    x = (theta_s / TWO_PI + 0.5) * cam.width_px
    y = (cam.h_max - h_s) / (cam.h_max - cam.h_min) * cam.height_px
    return x, y, valid


def inverse_warp(source: Panorama, target_depth: DepthMap, pose: Pose,
                 cam: CylindricalCamera, wrap: bool | None = None):
    """Synthesize the target view by sampling the source along the warp field.

    Returns ``(synthesized, valid)``; pixels with invalid depth or whose
    sample row leaves the panorama are flagged invalid and set to 0.
    """
    if (source.height_px, source.width_px) != (target_depth.height_px, target_depth.width_px):
        raise ValueError(
            f"source {source.height_px}x{source.width_px} does not match "
            f"depth {target_depth.height_px}x{target_depth.width_px}"
        )
    if (cam.height_px, cam.width_px) != (source.height_px, source.width_px):
        raise ValueError("camera dimensions do not match the images")

    x, y, valid_geom = warp_coordinates(target_depth, pose, cam)
    values, valid_sample = sample_bilinear(source, x, y, wrap=wrap)
    valid = valid_geom & valid_sample
    values = np.where(valid[..., None], values, 0.0)
    return Panorama(values, cyclic=source.cyclic), valid


def photometric_residuals(target: Panorama, synthesized: Panorama, valid: np.ndarray,
                          exp_mask: ExplainabilityMask | None = None) -> np.ndarray:
    """Per-pixel weighted photometric error, zero outside the valid mask."""
    if target.data.shape != synthesized.data.shape:
        raise ValueError("target and synthesized dimensions differ")
    diff = np.abs(synthesized.data - target.data).mean(axis=2)
    if exp_mask is not None:
        if exp_mask.weight.shape != diff.shape:
            raise ValueError("explainability mask dimensions differ")
        diff = exp_mask.weight * diff
    return np.where(valid, diff, 0.0)


def photometric_loss(target: Panorama, synthesized: Panorama, valid: np.ndarray,
                     exp_mask: ExplainabilityMask | None = None) -> float:
    """Mean over valid pixels of the mask-weighted L1 color difference.

    An empty valid set yields 0 with a warning.
    """
    res = photometric_residuals(target, synthesized, valid, exp_mask)
    n = int(np.count_nonzero(valid))
    if n == 0:
        warnings.warn("photometric loss over zero valid pixels", RuntimeWarning)
        return 0.0
    return float(res.sum() / n)


def _dx_central(a: np.ndarray) -> np.ndarray:
    """Horizontal central difference with wrap, spacing 1."""
    return (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / 2.0


def _dy_central(a: np.ndarray) -> np.ndarray:
    """Vertical derivative: central inside, one-sided at the first/last row."""
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / 2.0
    out[0] = a[1] - a[0]
    out[-1] = a[-1] - a[-2]
    return out


def _dxx(a: np.ndarray) -> np.ndarray:
    return np.roll(a, -1, axis=1) - 2.0 * a + np.roll(a, 1, axis=1)


def _dyy(a: np.ndarray) -> np.ndarray:
    """Vertical second difference, shifted stencil at the border rows."""
    out = np.empty_like(a)
    out[1:-1] = a[2:] - 2.0 * a[1:-1] + a[:-2]
    out[0] = a[2] - 2.0 * a[1] + a[0]
    out[-1] = a[-1] - 2.0 * a[-2] + a[-3]
    return out


def depth_curvature(depth: np.ndarray):
    """Second-difference fields (dxx, dxy, dyx, dyy) of a depth grid.

    Horizontal stencils wrap across the seam; vertical stencils fall back to
    one-sided differences at the top and bottom rows.
    """
    d = np.asarray(depth, dtype=float)
    if d.shape[0] < 3 or d.shape[1] < 3:
        raise ValueError(f"need at least 3x3 input, got {d.shape}")
    return _dxx(d), _dy_central(_dx_central(d)), _dx_central(_dy_central(d)), _dyy(d)


def smooth_loss_2nd(depth: DepthMap) -> float:
    """Mean absolute second derivative of the depth, all four mixed terms."""
    dxx, dxy, dyx, dyy = depth_curvature(depth.depth)
    return float(np.mean(np.abs(dxx) + np.abs(dxy) + np.abs(dyx) + np.abs(dyy)))


def laplacian_weight(img: Panorama) -> np.ndarray:
    """exp(-|laplacian|) of the channel-averaged image, wrap-aware stencils."""
    g = img.data.mean(axis=2)
    return np.exp(-np.abs(_dxx(g) + _dyy(g)))


def smooth_loss_image_aware(depth: DepthMap, img: Panorama) -> float:
    """Depth curvature penalty attenuated at image edges.

    Weights each pixel by exp(-|image laplacian|) so strong edges in the
    image relax the smoothing of the depth there.
    """
    if (img.height_px, img.width_px) != (depth.height_px, depth.width_px):
        raise ValueError("image and depth dimensions differ")
    dxx, dxy, _, dyy = depth_curvature(depth.depth)
    return float(np.mean(laplacian_weight(img) * (np.abs(dxx) + np.abs(dxy) + np.abs(dyy))))


def explainability_loss(mask: ExplainabilityMask) -> float:
    """Cross-entropy of the mask against all-ones: mean of -log(weight + eps)."""
    return float(np.mean(-np.log(mask.weight + LOG_EPS)))


def _smooth_term(depth: DepthMap, img: Panorama, weights: LossWeights) -> float:
    if weights.image_aware:
        return smooth_loss_image_aware(depth, img)
    return smooth_loss_2nd(depth)


def total_loss_from_pyramids(target_pyr, source_pyrs, depth_pyr, poses, weights,
                             mask_pyrs=None, cams=None, wrap=None) -> LossBreakdown:
    """Objective evaluation on pre-built pyramids; see :func:`total_loss`."""
    per_scale = []
    pixel_sum = smooth_sum = explain_sum = total = 0.0
    for s in range(weights.scales):
        cam = cams[s]
        pixel = 0.0
        explain = 0.0
        for k, src_pyr in enumerate(source_pyrs):
            mask = mask_pyrs[k][s] if mask_pyrs is not None else None
            synth, valid = inverse_warp(src_pyr[s], depth_pyr[s], poses[k], cam, wrap=wrap)
            pixel += photometric_loss(target_pyr[s], synth, valid, mask)
            if mask is not None:
                explain += explainability_loss(mask)
        smooth = _smooth_term(depth_pyr[s], target_pyr[s], weights)
        scale_total = pixel + weights.smooth_weight * smooth + weights.lambda_e * explain
        per_scale.append(LossTerms(pixel, smooth, explain, scale_total))
        pixel_sum += pixel
        smooth_sum += smooth
        explain_sum += explain
        total += scale_total
    return LossBreakdown(pixel_sum, smooth_sum, explain_sum, total, per_scale)


def build_pyramids(target: Panorama, sources, weights: LossWeights,
                   cam: CylindricalCamera, masks=None):
    """Downsample every input the objective needs, once."""
    target_pyr = downsample_pyramid(target, weights.scales)
    source_pyrs = [downsample_pyramid(s, weights.scales) for s in sources]
    mask_pyrs = None
    if masks is not None:
        mask_pyrs = [downsample_mask_pyramid(m, weights.scales) for m in masks]
    cams = [cam.at_scale(s) for s in range(weights.scales)]
    return target_pyr, source_pyrs, mask_pyrs, cams


def total_loss(target: Panorama, sources, depth_pyramid, poses, weights: LossWeights,
               masks=None, cam: CylindricalCamera | None = None,
               wrap: bool | None = None) -> LossBreakdown:
    """Full multi-scale objective.

    Every source is warped into the target at every pyramid scale; the
    photometric terms are summed over sources, the smoothness term is
    computed once per scale from the depth pyramid, and the explainability
    term (when masks are given) once per source per scale.

    ``depth_pyramid`` must already contain ``weights.scales`` levels, the
    finest first.  ``masks`` is an optional list of full-resolution masks,
    one per source.
    """
    if len(sources) != len(poses):
        raise ValueError(f"{len(sources)} sources but {len(poses)} poses")
    if len(depth_pyramid) != weights.scales:
        raise ValueError(
            f"depth pyramid has {len(depth_pyramid)} levels, expected {weights.scales}"
        )
    for s in sources:
        if (s.height_px, s.width_px) != (target.height_px, target.width_px):
            raise ValueError("source dimensions do not match the target")
    if cam is None:
        cam = CylindricalCamera(target.width_px, target.height_px)
    target_pyr, source_pyrs, mask_pyrs, cams = build_pyramids(target, sources, weights, cam, masks)
    return total_loss_from_pyramids(target_pyr, source_pyrs, depth_pyramid, poses,
                                    weights, mask_pyrs, cams, wrap=wrap)

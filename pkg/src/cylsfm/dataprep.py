"""Dataset construction: stitching, reprojection, filtering, cropping, sequencing."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import (
    TWO_PI,
    CylindricalCamera,
    PinholeCamera,
    Pose,
    pinhole_project,
    pixel_to_cyl,
    wrap_angle,
)
from .panorama import DepthMap, ExplainabilityMask, Panorama, sample_bilinear


class CoverageError(ValueError):
    """A view cannot cover its assigned azimuth sector."""


@dataclass
class SequenceRecord:
    """One training sample: a target frame plus its temporal neighbor sources."""

    target: Panorama
    sources: list[Panorama]
    frame_ids: list[int]
    gt_depth: DepthMap | None = None
    gt_poses: list[Pose] | None = None

    def __post_init__(self):
        shape = (self.target.height_px, self.target.width_px)
        for s in self.sources:
            if (s.height_px, s.width_px) != shape:
                raise ValueError("all frames in a sequence must share dimensions")
        ids = self.frame_ids
        mid = ids[len(ids) // 2]
        if not all(i < mid for i in ids[:len(ids) // 2]) or \
           not all(i > mid for i in ids[len(ids) // 2 + 1:]):
            raise ValueError(f"target id must lie strictly between source ids, got {ids}")

    @property
    def target_id(self) -> int:
        return self.frame_ids[len(self.frame_ids) // 2]


def stitch_pinhole_to_cylinder(views: list[Panorama], pin_cam: PinholeCamera,
                               out_cam: CylindricalCamera,
                               yaw_offsets_deg=(0.0, 90.0, 180.0, 270.0)) -> Panorama:
    """Stitch four 90-degree-sector perspective views into a 360 panorama.

    Each output pixel unprojects to a unit-cylinder ray, is rotated into the
    view whose optical axis is nearest in azimuth, pinhole-projected, and
    bilinearly sampled there.  No blending: sector ownership is exclusive,
    which keeps the operation deterministic and testable.
    """
    if len(views) != len(yaw_offsets_deg):
        raise ValueError(f"expected {len(yaw_offsets_deg)} views, got {len(views)}")
    for v in views:
        if (v.height_px, v.width_px) != (pin_cam.height_px, pin_cam.width_px):
            raise ValueError("view dimensions do not match the pinhole camera")

    # exclusive sectors extend half the angular gap to each side
    half_sector = math.pi / len(views)
    reach = pin_cam.fx * math.tan(half_sector)
    margin = 0.5  # allow the outermost half pixel
    if reach > min(pin_cam.cx, pin_cam.width_px - 1 - pin_cam.cx) + margin:
        gap = math.degrees(half_sector - math.atan(
            (min(pin_cam.cx, pin_cam.width_px - 1 - pin_cam.cx) + margin) / pin_cam.fx))
        raise CoverageError(
            f"view FOV too narrow: azimuth gap of about {gap:.2f} deg at sector boundaries"
        )

    rows, cols = np.mgrid[0:out_cam.height_px, 0:out_cam.width_px].astype(float)
    theta, h = pixel_to_cyl(cols, rows, out_cam)
    yaws = np.array([math.radians(a) for a in yaw_offsets_deg])
    offsets = np.abs(wrap_angle(theta[..., None] - yaws))
    owner = offsets.argmin(axis=-1)

    out = np.zeros((out_cam.height_px, out_cam.width_px, views[0].channels))
    for k, view in enumerate(views):
        sel = owner == k
        if not sel.any():
            continue
        rel = wrap_angle(theta[sel] - yaws[k])
        ray = np.stack([np.sin(rel), h[sel], np.cos(rel)], axis=-1)
        x, y = pinhole_project(ray, pin_cam)
        inside = (x >= 0) & (x <= pin_cam.width_px - 1) & \
                 (y >= 0) & (y <= pin_cam.height_px - 1)
        values, _ = sample_bilinear(view, x, y, wrap=False)
        out[sel] = np.where(inside[..., None], values, 0.0)
    return Panorama(out)


def equirect_to_cylinder(eq_img: Panorama, out_cam: CylindricalCamera) -> Panorama:
    """Reproject a full equirectangular frame onto the cylindrical model.

    Cylinder height maps to latitude via phi = atan(h); azimuth passes
    through unchanged.  The source must cover 360 x 180 degrees with row 0
    at latitude +pi/2 and column 0 at azimuth -pi.
    """
    rows, cols = np.mgrid[0:out_cam.height_px, 0:out_cam.width_px].astype(float)
    theta, h = pixel_to_cyl(cols, rows, out_cam)
    phi = np.arctan(h)
    x_eq = (theta / TWO_PI + 0.5) * eq_img.width_px
    y_eq = (0.5 - phi / math.pi) * eq_img.height_px
    values, valid = sample_bilinear(eq_img, x_eq, y_eq, wrap=True)
    return Panorama(np.where(valid[..., None], values, 0.0))


def detect_static_frames(poses: list[Pose], translation_thresh: float = 0.05,
                         rotation_thresh: float = 0.005) -> list[int]:
    """Indices of frames whose motion relative to the previous frame is negligible.

    A frame is static when both its translation delta and rotation-angle
    delta fall below the thresholds.  Frame 0 is never static.
    """
    static = []
    for i in range(1, len(poses)):
        dt = float(np.linalg.norm(poses[i].translation - poses[i - 1].translation))
        rel = poses[i - 1].rotation_matrix().T @ poses[i].rotation_matrix()
        ang = math.acos(min(1.0, max(-1.0, (np.trace(rel) - 1.0) / 2.0)))
        if dt < translation_thresh and ang < rotation_thresh:
            static.append(i)
    return static


def crop_fov(p: Panorama, fov_deg: float, center_azimuth_deg: float = 0.0) -> Panorama:
    """Extract a contiguous azimuth range as a non-cyclic image.

    Takes round(fov/360 * W) columns centered on the given azimuth, wrapping
    source indices across the seam as needed.  The result must not be wrap
    padded or seam sampled downstream.
    """
    if not 0.0 < fov_deg <= 360.0:
        raise ValueError(f"fov must lie in (0, 360], got {fov_deg}")
    w = p.width_px
    n = int(math.floor(fov_deg / 360.0 * w + 0.5))
    n = max(n, 1)
    center_col = (center_azimuth_deg / 360.0 + 0.5) * w
    start = int(math.floor(center_col - n / 2.0 + 0.5))
    idx = (start + np.arange(n)) % w
    return Panorama(p.data[:, idx].copy(), cyclic=False)


def azimuth_sector_mask(cam: CylindricalCamera, fov_deg: float,
                        center_azimuth_deg: float = 0.0) -> ExplainabilityMask:
    """Binary per-pixel weight selecting columns inside an azimuth sector.

    Used to restrict photometric objectives to a simulated narrower camera
    while keeping full-width panoramas.
    """
    if not 0.0 < fov_deg <= 360.0:
        raise ValueError(f"fov must lie in (0, 360], got {fov_deg}")
    cols = np.arange(cam.width_px, dtype=float)
    theta = (cols / cam.width_px - 0.5) * TWO_PI
    inside = np.abs(wrap_angle(theta - math.radians(center_azimuth_deg))) \
        <= math.radians(fov_deg) / 2.0
    weight = np.broadcast_to(inside.astype(float), (cam.height_px, cam.width_px))
    return ExplainabilityMask(weight.copy())


def make_sequences(frames: list[tuple[int, Panorama]], seq_len: int = 3, stride: int = 1,
                   depths: dict[int, DepthMap] | None = None,
                   poses: dict[int, Pose] | None = None) -> list[SequenceRecord]:
    """Sliding windows of consecutive frames; middle frame is the target.

    Windows never span a gap in the frame ids (for example one produced by
    static-frame removal).  Too few frames yield an empty list with a
    warning.
    """
    if seq_len < 3 or seq_len % 2 == 0:
        raise ValueError(f"seq_len must be odd and >= 3, got {seq_len}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if len(frames) < seq_len:
        warnings.warn(f"only {len(frames)} frames, need {seq_len}; no sequences produced",
                      RuntimeWarning)
        return []

    records = []
    for start in range(0, len(frames) - seq_len + 1, stride):
        window = frames[start:start + seq_len]
        ids = [fid for fid, _ in window]
        if any(ids[j + 1] - ids[j] != 1 for j in range(seq_len - 1)):
            continue
        mid = seq_len // 2
        target_id, target = window[mid]
        sources = [img for j, (_, img) in enumerate(window) if j != mid]
        gt_depth = depths.get(target_id) if depths else None
        gt_poses = None
        if poses and all(fid in poses for fid in ids):
            gt_poses = [poses[fid] for fid in ids]
        records.append(SequenceRecord(target, sources, ids, gt_depth, gt_poses))
    return records

"""Camera models and rigid-body transforms for 360-degree cylindrical panoramas.

Conventions used throughout the package:

* sensor frame: x to the right, y along increasing image rows, z forward
* azimuth ``theta = atan2(x, z)``, zero straight ahead, reduced to [-pi, pi)
* cylinder height ``h = y / radial_distance`` (dimensionless, per unit radius)
* pixel column 0 sits at ``theta = -pi``; the seam is behind the camera and
  the forward direction maps to the image center column
* image row 0 corresponds to ``h_max``, row ``H`` to ``h_min``
* the depth of a point seen by a cylindrical camera is its radial distance
  ``sqrt(x**2 + z**2)``; for a pinhole camera it is ``z``

All functions are pure and accept scalars or numpy arrays (broadcasting on
the leading dimensions); 3D points are arrays of shape ``(..., 3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Reduce angles to the half-open interval [-pi, pi)."""
    return np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class CylindricalCamera:
    """Full-360 cylindrical camera.

    The azimuth span is exactly 2*pi across ``width_px`` columns, so the
    angular pitch is ``2*pi / width_px``.  When ``h_min``/``h_max`` are not
    given they default to the square-pixel extent ``+-pi * H / W`` (equal
    angular and height pitch on the unit cylinder).
    """

    width_px: int
    height_px: int
    h_min: float | None = None
    h_max: float | None = None

    def __post_init__(self):
        if self.width_px < 2 or self.height_px < 1:
            raise ValueError(
                f"camera size {self.width_px}x{self.height_px} too small "
                "(need width >= 2, height >= 1)"
            )
        if (self.h_min is None) != (self.h_max is None):
            raise ValueError("give both h_min and h_max, or neither")
        if self.h_min is None:
            half = math.pi * self.height_px / self.width_px
            object.__setattr__(self, "h_min", -half)
            object.__setattr__(self, "h_max", half)
        if not self.h_min < self.h_max:
            raise ValueError(f"h_min {self.h_min} must be < h_max {self.h_max}")

    @property
    def pixel_pitch(self) -> float:
        return TWO_PI / self.width_px

    def at_scale(self, scale: int) -> "CylindricalCamera":
        """Camera for pyramid level ``scale`` (dimensions divided by 2**scale)."""
        f = 1 << scale
        if self.width_px % f or self.height_px % f:
            raise ValueError(
                f"camera {self.width_px}x{self.height_px} not divisible by {f}"
            )
        return CylindricalCamera(self.width_px // f, self.height_px // f,
                                 self.h_min, self.h_max)


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width_px: int
    height_px: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    @property
    def hfov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.width_px / (2.0 * self.fx)))


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx_to_matrix(rx, ry, rz) -> np.ndarray:
    """Rotation matrix applying rz about z first, then ry about y, then rx about x."""
    return _rot_x(rx) @ _rot_y(ry) @ _rot_z(rz)


def matrix_to_euler_zyx(rot: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_zyx_to_matrix`; picks rz = 0 at gimbal lock."""
    r02 = float(np.clip(rot[0, 2], -1.0, 1.0))
    ry = math.asin(r02)
    if abs(r02) < 1.0 - 1e-12:
        rx = math.atan2(-rot[1, 2], rot[2, 2])
        rz = math.atan2(-rot[0, 1], rot[0, 0])
    else:
        sy = 1.0 if r02 > 0 else -1.0
        rx = math.atan2(sy * rot[1, 0], rot[1, 1])
        rz = 0.0
    return rx, ry, rz


@dataclass(frozen=True, eq=False)
class Pose:
    """6-DoF rigid transform: translation in meters, Euler rotation in radians.

    The derived matrix is ``R = Rx(rx) @ Ry(ry) @ Rz(rz)`` and the transform
    maps a point ``p`` to ``R @ p + t``.
    """

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        r = np.asarray(self.rotation, dtype=float).reshape(3)
        if not (np.isfinite(t).all() and np.isfinite(r).all()):
            raise ValueError("pose parameters must be finite")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, vec) -> "Pose":
        v = np.asarray(vec, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation])

    def rotation_matrix(self) -> np.ndarray:
        rx, ry, rz = self.rotation
        return euler_zyx_to_matrix(rx, ry, rz)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the transform to points of shape (..., 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation_matrix().T + self.translation

    def inverse(self) -> "Pose":
        rot_inv = self.rotation_matrix().T
        return Pose(-rot_inv @ self.translation,
                    np.array(matrix_to_euler_zyx(rot_inv)))

    def compose(self, other: "Pose") -> "Pose":
        """Transform applying ``other`` first, then ``self``."""
        rot = self.rotation_matrix() @ other.rotation_matrix()
        t = self.rotation_matrix() @ other.translation + self.translation
        return Pose(t, np.array(matrix_to_euler_zyx(rot)))


def pose_transform(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Rigid transform R @ p + t of points with shape (..., 3)."""
    return pose.transform(points)


def cyl_project(points: np.ndarray, strict: bool = True):
    """Project sensor-frame points onto the unit cylinder.

    Returns ``(theta, h, depth)`` with ``theta = atan2(x, z)`` in [-pi, pi),
    ``h = y / sqrt(x**2 + z**2)`` and ``depth = sqrt(x**2 + z**2)``.

    Points on the cylinder axis (x = z = 0) are degenerate: with
    ``strict=True`` they raise, otherwise they come back with depth 0 and
    must be masked by the caller.
    """
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    depth = np.hypot(x, z)
    if strict and np.any(depth == 0.0):
        raise ValueError("degenerate point on the cylinder axis (x == z == 0)")
    theta = wrap_angle(np.arctan2(x, z))
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(depth > 0.0, y / np.where(depth > 0.0, depth, 1.0), 0.0)
    return theta, h, depth


def cyl_unproject(theta, h, depth) -> np.ndarray:
    """Lift unit-cylinder coordinates back to a sensor-frame 3D point.

    Returns ``(d*sin(theta), d*h, d*cos(theta))`` stacked on the last axis.
    """
    d = np.asarray(depth, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("depth must be positive")
    theta = np.asarray(theta, dtype=float)
    h = np.asarray(h, dtype=float)
    return np.stack([d * np.sin(theta), d * h, d * np.cos(theta)], axis=-1)


def cyl_to_pixel(theta, h, cam: CylindricalCamera):
    """Continuous pixel coordinates of cylinder coordinates.

    x is cyclic in [0, W): theta = -pi maps to column 0, theta = 0 to the
    image center.  y runs from h_max at row 0 to h_min at row H and may fall
    outside [0, H); consumers flag that case.
    """
    x = (wrap_angle(theta) / TWO_PI + 0.5) * cam.width_px
    y = (cam.h_max - np.asarray(h, dtype=float)) / (cam.h_max - cam.h_min) * cam.height_px
    return x, y


def pixel_to_cyl(x, y, cam: CylindricalCamera):
    """Inverse of :func:`cyl_to_pixel`."""
    theta = (np.asarray(x, dtype=float) / cam.width_px - 0.5) * TWO_PI
    h = cam.h_max - np.asarray(y, dtype=float) * (cam.h_max - cam.h_min) / cam.height_px
    return theta, h


def pinhole_project(points: np.ndarray, cam: PinholeCamera):
    """Perspective projection; requires z > 0 (points in front of the camera)."""
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if np.any(z <= 0.0):
        raise ValueError("point behind the camera (z <= 0)")
    return cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy


def pinhole_unproject(x, y, depth, cam: PinholeCamera) -> np.ndarray:
    """Lift pixel coordinates to a sensor-frame point at the given z-depth."""
    z = np.asarray(depth, dtype=float)
    if np.any(z <= 0.0):
        raise ValueError("depth must be positive")
    xs = (np.asarray(x, dtype=float) - cam.cx) / cam.fx * z
    ys = (np.asarray(y, dtype=float) - cam.cy) / cam.fy * z
    return np.stack([xs, ys, np.broadcast_to(z, xs.shape).copy()], axis=-1)

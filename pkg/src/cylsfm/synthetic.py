"""Exact synthetic scenes for validating warps, losses, and optimizers.

The scene is an infinite textured cylinder of known radius around the world
vertical axis.  Rays from any camera pose intersect it in closed form, so
panoramas, pinhole views, equirectangular frames, and ground-truth depth
maps can all be rendered exactly from known geometry.  The texture is a
band-limited sum of sinusoids, periodic in azimuth, so photometric
objectives stay smooth and seam-consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CylindricalCamera, PinholeCamera, Pose, pixel_to_cyl
from .panorama import DepthMap, Panorama


@dataclass(frozen=True)
class CylinderScene:
    """Textured cylinder x^2 + z^2 = radius^2 with per-channel sinusoid texture."""

    radius: float
    azimuth_freq: np.ndarray   # (C, K) integer azimuth frequencies
    height_freq: np.ndarray    # (C, K) height frequencies, rad per meter
    phase: np.ndarray          # (C, K)
    amplitude: np.ndarray      # (C, K), sum of |amplitude| per channel <= 0.45

    @classmethod
    def random(cls, seed: int = 0, radius: float = 5.0, channels: int = 3,
               terms: int = 6, max_azimuth_freq: int = 8,
               max_height_freq: float = 2.0) -> "CylinderScene":
        rng = np.random.default_rng(seed)
        m = rng.integers(1, max_azimuth_freq + 1, size=(channels, terms))
        w = rng.uniform(0.2, max_height_freq, size=(channels, terms))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(channels, terms))
        amp = rng.uniform(0.3, 1.0, size=(channels, terms))
        amp *= 0.45 / amp.sum(axis=1, keepdims=True)
        return cls(radius, m.astype(float), w, phase, amp)

    def texture(self, azimuth: np.ndarray, height: np.ndarray) -> np.ndarray:
        """Surface color at the given azimuth/height, shape (..., C), values in [0, 1]."""
        az = np.asarray(azimuth, dtype=float)[..., None, None]
        y = np.asarray(height, dtype=float)[..., None, None]
        waves = self.amplitude * np.sin(self.azimuth_freq * az + self.height_freq * y + self.phase)
        return 0.5 + waves.sum(axis=-1)


def _raycast(scene: CylinderScene, dirs_cam: np.ndarray, pose: Pose):
    """Intersect camera-frame rays with the cylinder; pose is camera-to-world.

    Returns (colors, ray_parameter): the hit point is ``s * dir`` in the
    camera frame, so choosing the direction normalization fixes the meaning
    of ``s`` (radial depth for cylindrical rays, z-depth for pinhole rays).
    """
    origin = pose.translation
    if np.hypot(origin[0], origin[2]) >= scene.radius:
        raise ValueError("camera must sit inside the scene cylinder")
    v = np.asarray(dirs_cam, dtype=float) @ pose.rotation_matrix().T
    a = v[..., 0] ** 2 + v[..., 2] ** 2
    if np.any(a <= 0.0):
        raise ValueError("ray parallel to the cylinder axis never hits the wall")
    b = 2.0 * (origin[0] * v[..., 0] + origin[2] * v[..., 2])
    c = origin[0] ** 2 + origin[2] ** 2 - scene.radius ** 2
    s = (-b + np.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
    hit = origin + s[..., None] * v
    colors = scene.texture(np.arctan2(hit[..., 0], hit[..., 2]), hit[..., 1])
    return colors, s


def render_cylindrical(scene: CylinderScene, cam: CylindricalCamera,
                       pose: Pose | None = None):
    """Render a panorama and its ground-truth depth from a camera pose."""
    if pose is None:
        pose = Pose.identity()
    rows, cols = np.mgrid[0:cam.height_px, 0:cam.width_px].astype(float)
    theta, h = pixel_to_cyl(cols, rows, cam)
    # unit horizontal component, so the ray parameter equals the radial depth
    dirs = np.stack([np.sin(theta), h, np.cos(theta)], axis=-1)
    colors, depth = _raycast(scene, dirs, pose)
    return Panorama(colors), DepthMap(depth)


def render_pinhole(scene: CylinderScene, cam: PinholeCamera,
                   pose: Pose | None = None) -> Panorama:
    """Render a perspective view; the ray parameter equals the z-depth."""
    if pose is None:
        pose = Pose.identity()
    rows, cols = np.mgrid[0:cam.height_px, 0:cam.width_px].astype(float)
    dirs = np.stack([(cols - cam.cx) / cam.fx,
                     (rows - cam.cy) / cam.fy,
                     np.ones_like(cols)], axis=-1)
    colors, _ = _raycast(scene, dirs, pose)
    return Panorama(colors, cyclic=False)


def render_equirect(scene: CylinderScene, width: int, height: int,
                    pose: Pose | None = None) -> Panorama:
    """Render an equirectangular frame: columns are azimuth, rows latitude.

    Row 0 maps to latitude +pi/2; column 0 to azimuth -pi, matching the
    panorama column convention.
    """
    if pose is None:
        pose = Pose.identity()
    rows, cols = np.mgrid[0:height, 0:width].astype(float)
    lon = (cols / width - 0.5) * 2.0 * np.pi
    lat = (0.5 - rows / height) * np.pi
    # avoid exactly vertical rays at the poles
    lat = np.clip(lat, -np.pi / 2 + 1e-6, np.pi / 2 - 1e-6)
    dirs = np.stack([np.cos(lat) * np.sin(lon), np.sin(lat), np.cos(lat) * np.cos(lon)], axis=-1)
    colors, _ = _raycast(scene, dirs, pose)
    return Panorama(colors)

"""Image containers with cyclic horizontal topology and wrap-aware operations.

Data layout is channel-interleaved row-major, shape (H, W, C), float64.
Column W is identified with column 0 whenever an image is cyclic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Fractional sample positions closer than this to a grid line are snapped to
# it, so coordinate chains that should land on integers do so exactly.
_SNAP_EPS = 1e-9


@dataclass(eq=False)
class Panorama:
    """H x W x C floating-point image; horizontally cyclic unless cropped."""

    data: np.ndarray
    cyclic: bool = True

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"expected (H, W, C) image data, got shape {np.shape(self.data)}")
        self.data = arr

    @property
    def height_px(self) -> int:
        return self.data.shape[0]

    @property
    def width_px(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def constant(cls, height: int, width: int, channels: int = 1, value: float = 0.0,
                 cyclic: bool = True) -> "Panorama":
        return cls(np.full((height, width, channels), float(value)), cyclic=cyclic)

    def shift_columns(self, k: int) -> "Panorama":
        """Cyclic shift moving column j to column j + k."""
        return Panorama(np.roll(self.data, k, axis=1), cyclic=self.cyclic)


@dataclass(eq=False)
class DepthMap:
    """Per-pixel positive depths (meters) with a validity mask."""

    depth: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        if d.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {d.shape}")
        if self.valid is None:
            v = np.ones(d.shape, dtype=bool)
        else:
            v = np.asarray(self.valid, dtype=bool)
            if v.shape != d.shape:
                raise ValueError("valid mask shape does not match depth")
        if np.any(~np.isfinite(d[v])) or np.any(d[v] <= 0.0):
            raise ValueError("depth must be finite and positive wherever valid")
        self.depth = d
        self.valid = v

    @property
    def height_px(self) -> int:
        return self.depth.shape[0]

    @property
    def width_px(self) -> int:
        return self.depth.shape[1]

    @classmethod
    def constant(cls, height: int, width: int, value: float) -> "DepthMap":
        return cls(np.full((height, width), float(value)))


@dataclass(eq=False)
class ExplainabilityMask:
    """Per-pixel weight in [0, 1] down-weighting unexplainable motion."""

    weight: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        if w.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {w.shape}")
        if np.any(w < 0.0) or np.any(w > 1.0):
            raise ValueError("mask weights must lie in [0, 1]")
        self.weight = w

    @property
    def height_px(self) -> int:
        return self.weight.shape[0]

    @property
    def width_px(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def ones(cls, height: int, width: int) -> "ExplainabilityMask":
        return cls(np.ones((height, width)))


def _snap(frac, base):
    near_lo = frac < _SNAP_EPS
    near_hi = frac > 1.0 - _SNAP_EPS
    frac = np.where(near_lo, 0.0, frac)
    frac = np.where(near_hi, 0.0, frac)
    base = np.where(near_hi, base + 1, base)
    return frac, base


def sample_bilinear(img: Panorama, x, y, wrap: bool | None = None):
    """Bilinear sample at continuous pixel coordinates.

    With ``wrap`` (default: the image's own cyclicity) x is reduced modulo W
    and interpolation crosses the seam; without it x is clamped to the image
    border.  Rows outside [0, H-1] are flagged invalid and return 0.

    Returns ``(values, valid)`` where values has shape ``x.shape + (C,)``.
    """
    if wrap is None:
        wrap = img.cyclic
    h, w = img.height_px, img.width_px
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    if wrap:
        x = np.mod(x, w)
    else:
        x = np.clip(x, 0.0, w - 1.0)
    x0 = np.floor(x)
    fx, x0 = _snap(x - x0, x0)
    x0 = x0.astype(int)
    if wrap:
        x0 = np.mod(x0, w)
        x1 = np.mod(x0 + 1, w)
    else:
        x1 = np.minimum(x0 + 1, w - 1)

    valid = (y >= -_SNAP_EPS) & (y <= h - 1.0 + _SNAP_EPS)
    yc = np.clip(y, 0.0, h - 1.0)
    y0 = np.floor(yc)
    fy, y0 = _snap(yc - y0, y0)
    y0 = y0.astype(int)
    y1 = np.minimum(y0 + 1, h - 1)

    data = img.data
    wx = fx[..., None]
    wy = fy[..., None]
    values = ((1.0 - wx) * (1.0 - wy) * data[y0, x0]
              + wx * (1.0 - wy) * data[y0, x1]
              + (1.0 - wx) * wy * data[y1, x0]
              + wx * wy * data[y1, x1])
    values = np.where(valid[..., None], values, 0.0)
    return values, valid


def sample_bilinear_wrap(img: Panorama, x, y):
    """Seam-crossing bilinear sample; see :func:`sample_bilinear`."""
    return sample_bilinear(img, x, y, wrap=True)


def wrap_pad(img: Panorama, pad: int) -> Panorama:
    """Pad horizontally by copying columns across the seam.

    The first ``pad`` output columns repeat the last ``pad`` input columns
    and vice versa.  The result is no longer cyclic.
    """
    if not 0 <= pad <= img.width_px:
        raise ValueError(f"pad {pad} outside [0, {img.width_px}]")
    if pad == 0:
        return Panorama(img.data.copy(), cyclic=False)
    d = img.data
    return Panorama(np.concatenate([d[:, -pad:], d, d[:, :pad]], axis=1), cyclic=False)


def conv2d_wrap(img: Panorama, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    """Same-padding 2-D cross-correlation with horizontally wrapped borders.

    The kernel is applied per channel.  Columns wrap across the seam; rows
    are zero padded.  Output shape is (ceil(H/stride), W/stride, C); the
    stride must divide W so the output stays cyclic.
    """
    k = np.asarray(kernel, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got shape {k.shape}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if img.width_px % stride:
        raise ValueError(f"stride {stride} does not divide width {img.width_px}")

    ksz = k.shape[0]
    pad = ksz // 2
    h, w = img.height_px, img.width_px

    padded = wrap_pad(img, pad).data
    padded = np.pad(padded, ((pad, pad), (0, 0), (0, 0)))

    # Accumulate one kernel tap at a time: the per-pixel summation order is
    # then identical at every output location, which keeps the result
    # bit-exact under cyclic column shifts.
    out = np.zeros((h, w, img.channels))
    for a in range(ksz):
        for b in range(ksz):
            out += k[a, b] * padded[a:a + h, b:b + w]
    return out[::stride, ::stride]


def _box2(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[0], arr.shape[1]
    return arr.reshape(h // 2, 2, w // 2, 2, *arr.shape[2:]).mean(axis=(1, 3))


def _check_pyramid_divisible(height: int, width: int, scales: int):
    if scales < 1:
        raise ValueError(f"scales must be >= 1, got {scales}")
    f = 1 << (scales - 1)
    if height % f or width % f:
        raise ValueError(f"{height}x{width} not divisible by 2**{scales - 1}")


def downsample_pyramid(img: Panorama, scales: int) -> list[Panorama]:
    """Multi-scale pyramid by repeated 2x2 box averaging; level 0 is the input.

    Box cells never straddle the seam (the width stays even), so the
    averaging respects the cyclic topology.
    """
    _check_pyramid_divisible(img.height_px, img.width_px, scales)
    levels = [img]
    for _ in range(scales - 1):
        levels.append(Panorama(_box2(levels[-1].data), cyclic=img.cyclic))
    return levels


def downsample_depth_pyramid(depth: DepthMap, scales: int) -> list[DepthMap]:
    """Depth pyramid: box-average the valid members of each 2x2 cell."""
    _check_pyramid_divisible(depth.height_px, depth.width_px, scales)
    levels = [depth]
    for _ in range(scales - 1):
        prev = levels[-1]
        h, w = prev.height_px, prev.width_px
        d = prev.depth.reshape(h // 2, 2, w // 2, 2)
        v = prev.valid.reshape(h // 2, 2, w // 2, 2)
        count = v.sum(axis=(1, 3))
        total = np.where(v, d, 0.0).sum(axis=(1, 3))
        valid = count > 0
        mean = np.where(valid, total / np.maximum(count, 1), 1.0)
        levels.append(DepthMap(np.where(valid, mean, 1.0), valid))
    return levels


def downsample_mask_pyramid(mask: ExplainabilityMask, scales: int) -> list[ExplainabilityMask]:
    _check_pyramid_divisible(mask.height_px, mask.width_px, scales)
    levels = [mask]
    for _ in range(scales - 1):
        levels.append(ExplainabilityMask(_box2(levels[-1].weight)))
    return levels

"""File formats: lossless 8-bit PNG for color, PFM for depth/masks, text for poses.

Depth maps are stored as single-channel portable float maps (little endian,
scale -1.0) with invalid pixels encoded as 0.  Trajectories are plain text,
one ``frame_id tx ty tz rx ry rz`` record per line.
"""

from __future__ import annotations

import os

import numpy as np
import yaml
from PIL import Image

from .geometry import CylindricalCamera, PinholeCamera, Pose
from .panorama import DepthMap, ExplainabilityMask, Panorama


def write_image(path, img: Panorama):
    data = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path)
    elif img.channels == 3:
        Image.fromarray(data, mode="RGB").save(path)
    else:
        raise ValueError(f"cannot store {img.channels}-channel images (need 1 or 3)")


def read_image(path, cyclic: bool = True) -> Panorama:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=float) / 255.0
    return Panorama(arr, cyclic=cyclic)


def write_pfm(path, array: np.ndarray):
    """Single-channel PFM, little endian (negative scale), rows bottom to top."""
    a = np.asarray(array, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError(f"PFM writer expects a 2-D array, got shape {a.shape}")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{a.shape[1]} {a.shape[0]}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(a).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM file")
        width, height = map(int, f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(width * height * 4), dtype=dtype)
    if data.size != width * height:
        raise ValueError(f"{path}: truncated PFM payload")
    return np.flipud(data.reshape(height, width)).astype(float)


def write_depth(path, depth: DepthMap):
    write_pfm(path, np.where(depth.valid, depth.depth, 0.0))


def read_depth(path) -> DepthMap:
    d = read_pfm(path)
    valid = d > 0.0
    return DepthMap(np.where(valid, d, 1.0), valid)


def write_mask(path, mask: ExplainabilityMask):
    write_pfm(path, mask.weight)


def read_mask(path) -> ExplainabilityMask:
    return ExplainabilityMask(np.clip(read_pfm(path), 0.0, 1.0))


def write_trajectory(path, poses: list[Pose], frame_ids=None):
    if frame_ids is None:
        frame_ids = range(len(poses))
    lines = ["# frame_id tx ty tz rx ry rz"]
    for fid, p in zip(frame_ids, poses):
        vals = " ".join(f"{v!r}" for v in p.as_vector())
        lines.append(f"{fid} {vals}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_trajectory(path):
    ids, poses = [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 7:
                raise ValueError(f"{path}: expected 7 fields per record, got {len(parts)}")
            ids.append(int(parts[0]))
            poses.append(Pose.from_vector([float(v) for v in parts[1:]]))
    return ids, poses


def write_pose(path, pose: Pose):
    with open(path, "w") as f:
        yaml.safe_dump({"translation": [float(v) for v in pose.translation],
                        "rotation": [float(v) for v in pose.rotation]}, f)


def read_pose(path) -> Pose:
    with open(path) as f:
        d = yaml.safe_load(f)
    unknown = set(d) - {"translation", "rotation"}
    if unknown:
        raise ValueError(f"{path}: unknown pose keys {sorted(unknown)}")
    return Pose(np.asarray(d["translation"], dtype=float),
                np.asarray(d["rotation"], dtype=float))


def camera_to_dict(cam) -> dict:
    if isinstance(cam, CylindricalCamera):
        return {"type": "cylindrical", "width_px": cam.width_px, "height_px": cam.height_px,
                "h_min": float(cam.h_min), "h_max": float(cam.h_max)}
    if isinstance(cam, PinholeCamera):
        return {"type": "pinhole", "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                "width_px": cam.width_px, "height_px": cam.height_px}
    raise ValueError(f"unknown camera type {type(cam).__name__}")


def camera_from_dict(d: dict):
    kind = d.get("type")
    if kind == "cylindrical":
        allowed = {"type", "width_px", "height_px", "h_min", "h_max"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown camera keys {sorted(unknown)}")
        return CylindricalCamera(int(d["width_px"]), int(d["height_px"]),
                                 d.get("h_min"), d.get("h_max"))
    if kind == "pinhole":
        allowed = {"type", "fx", "fy", "cx", "cy", "width_px", "height_px"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown camera keys {sorted(unknown)}")
        return PinholeCamera(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                             int(d["width_px"]), int(d["height_px"]))
    raise ValueError(f"camera type must be 'cylindrical' or 'pinhole', got {kind!r}")


def write_camera(path, cam):
    with open(path, "w") as f:
        yaml.safe_dump(camera_to_dict(cam), f)


def read_camera(path):
    with open(path) as f:
        return camera_from_dict(yaml.safe_load(f))


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path

"""Depth-prediction error metrics and absolute trajectory error (ATE)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose
from .panorama import DepthMap


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    CSV_HEADER = "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3"

    def to_csv_row(self) -> str:
        return ",".join(f"{v:.6f}" for v in
                        (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
                         self.delta1, self.delta2, self.delta3))

    def summary(self) -> str:
        return (f"abs_rel  {self.abs_rel:.4f}\n"
                f"sq_rel   {self.sq_rel:.4f}\n"
                f"rmse     {self.rmse:.4f}\n"
                f"rmse_log {self.rmse_log:.4f}\n"
                f"delta<1.25   {self.delta1:.4f}\n"
                f"delta<1.25^2 {self.delta2:.4f}\n"
                f"delta<1.25^3 {self.delta3:.4f}")


def depth_metrics(pred: DepthMap, gt: DepthMap, median_scale: bool = True,
                  cap: float = 80.0) -> DepthMetrics:
    """Standard per-pixel depth error and threshold-accuracy statistics.

    Evaluation is restricted to pixels valid in both maps with ground truth
    at most ``cap`` meters.  With ``median_scale`` the prediction is first
    multiplied by median(gt)/median(pred) over that set, which removes the
    global scale ambiguity of monocular predictions.
    """
    if pred.depth.shape != gt.depth.shape:
        raise ValueError("prediction and ground truth dimensions differ")
    sel = pred.valid & gt.valid & (gt.depth <= cap)
    if not sel.any():
        raise ValueError("no valid pixels to evaluate")
    p = pred.depth[sel]
    g = gt.depth[sel]
    if median_scale:
        p = p * (np.median(g) / np.median(p))

    thresh = np.maximum(p / g, g / p)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(p - g) / g)),
        sq_rel=float(np.mean((p - g) ** 2 / g)),
        rmse=float(np.sqrt(np.mean((p - g) ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25 ** 2)),
        delta3=float(np.mean(thresh < 1.25 ** 3)),
    )


def _anchored_positions(poses: list[Pose], start: int, length: int) -> np.ndarray:
    """Window positions expressed in the first frame's coordinate system."""
    first_inv = poses[start].inverse()
    return np.stack([first_inv.compose(poses[start + j]).translation
                     for j in range(length)])


def ate(pred: list[Pose], gt: list[Pose], snippet_len: int = 3) -> tuple[float, float]:
    """Absolute trajectory error over all snippets of consecutive frames.

    Each window is anchored by fixing its first frame to the identity in
    both trajectories; a least-squares scale factor then aligns the
    predicted positions to the ground truth (no rotational re-alignment).
    The window's ATE is the mean Euclidean position error over its frames.
    Returns the mean and standard deviation over all sliding windows.
    """
    if len(pred) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(pred)} vs {len(gt)}")
    if len(gt) < snippet_len or snippet_len < 2:
        raise ValueError(f"need at least snippet_len={snippet_len} >= 2 frames, got {len(gt)}")

    window_errors = []
    for start in range(len(gt) - snippet_len + 1):
        pp = _anchored_positions(pred, start, snippet_len)
        pg = _anchored_positions(gt, start, snippet_len)
        denom = float(np.sum(pp * pp))
        scale = float(np.sum(pp * pg)) / denom if denom > 0 else 1.0
        err = np.linalg.norm(scale * pp - pg, axis=1)
        window_errors.append(float(err.mean()))
    errors = np.asarray(window_errors)
    return float(errors.mean()), float(errors.std())

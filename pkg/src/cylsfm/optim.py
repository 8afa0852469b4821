"""Direct gradient-based minimization of the view-synthesis objective.

Instead of training network weights, the objective is minimized directly
over the 6 pose parameters or the per-pixel inverse depth (disparity),
using backtracking gradient descent.  Pose gradients come from central
finite differences; depth gradients combine a two-sided warp evaluation
(each pixel's photometric residual depends only on its own disparity) with
the exact adjoints of the smoothness stencils.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CylindricalCamera, Pose
from .panorama import DepthMap, Panorama, downsample_depth_pyramid, downsample_mask_pyramid, downsample_pyramid
from .synthesis import (
    LossBreakdown,
    LossTerms,
    LossWeights,
    _dx_central,
    _dxx,
    _dy_central,
    _dyy,
    build_pyramids,
    depth_curvature,
    inverse_warp,
    laplacian_weight,
    photometric_residuals,
    total_loss_from_pyramids,
)

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class OptimConfig:
    max_iters: int = 100
    step_size: float = 0.01
    fd_epsilon: float = 1e-5
    convergence_tol: float = 1e-8
    depth_bounds: tuple[float, float] = (0.1, 100.0)

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.fd_epsilon <= 0:
            raise ValueError(f"fd_epsilon must be positive, got {self.fd_epsilon}")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be nonnegative")
        lo, hi = self.depth_bounds
        if not 0 < lo < hi:
            raise ValueError(f"depth bounds must satisfy 0 < min < max, got {self.depth_bounds}")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    pixel: float
    smooth: float
    explain: float
    total: float
    step: float


def trace_to_csv(trace) -> str:
    lines = ["iter,pixel,smooth,explain,total,step"]
    for r in trace:
        lines.append(f"{r.iteration},{r.pixel!r},{r.smooth!r},{r.explain!r},{r.total!r},{r.step!r}")
    return "\n".join(lines) + "\n"


def numeric_gradient(objective, params, fd_epsilon: float) -> np.ndarray:
    """Central-difference gradient (f(p + e_k) - f(p - e_k)) / 2eps."""
    if fd_epsilon <= 0:
        raise ValueError(f"fd_epsilon must be positive, got {fd_epsilon}")
    p = np.asarray(params, dtype=float).ravel().copy()
    grad = np.empty_like(p)
    for k in range(p.size):
        saved = p[k]
        p[k] = saved + fd_epsilon
        f_plus = objective(p)
        p[k] = saved - fd_epsilon
        f_minus = objective(p)
        p[k] = saved
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(f"non-finite objective while probing parameter index {k}")
        grad[k] = (f_plus - f_minus) / (2.0 * fd_epsilon)
    return grad


# Adjoints of the finite-difference stencils in synthesis, used to get
# exact (sub)gradients of the smoothness terms without per-pixel probing.

def _dx_central_adj(g):
    return (np.roll(g, 1, axis=1) - np.roll(g, -1, axis=1)) / 2.0


def _dxx_adj(g):
    return np.roll(g, 1, axis=1) - 2.0 * g + np.roll(g, -1, axis=1)


def _dy_central_adj(g):
    out = np.zeros_like(g)
    out[2:] += g[1:-1] / 2.0
    out[:-2] -= g[1:-1] / 2.0
    out[1] += g[0]
    out[0] -= g[0]
    out[-1] += g[-1]
    out[-2] -= g[-1]
    return out


def _dyy_adj(g):
    out = np.zeros_like(g)
    out[2:] += g[1:-1]
    out[1:-1] -= 2.0 * g[1:-1]
    out[:-2] += g[1:-1]
    out[2] += g[0]
    out[1] -= 2.0 * g[0]
    out[0] += g[0]
    out[-1] += g[-1]
    out[-2] -= 2.0 * g[-1]
    out[-3] += g[-1]
    return out


def smooth_gradient(depth: np.ndarray, weights: LossWeights,
                    img: Panorama | None = None) -> np.ndarray:
    """Subgradient of the active (unweighted) smoothness term w.r.t. depth."""
    dxx, dxy, dyx, dyy = depth_curvature(depth)
    n = depth.size
    if weights.image_aware:
        wgt = laplacian_weight(img)
        g = (_dxx_adj(wgt * np.sign(dxx))
             + _dx_central_adj(_dy_central_adj(wgt * np.sign(dxy)))
             + _dyy_adj(wgt * np.sign(dyy)))
    else:
        g = (_dxx_adj(np.sign(dxx))
             + _dx_central_adj(_dy_central_adj(np.sign(dxy)))
             + _dy_central_adj(_dx_central_adj(np.sign(dyx)))
             + _dyy_adj(np.sign(dyy)))
    return g / n


def _backtrack(f_current, evaluate, gradient, current, step0, project=None):
    """Armijo backtracking line search along the negative gradient.

    Returns ``(accepted, new_params, f_new, step)``; ``evaluate`` maps
    parameters to the scalar objective and ``project`` (optional) clamps the
    trial point before evaluation.
    """
    alpha = step0
    for _ in range(MAX_BACKTRACKS):
        trial = current - alpha * gradient
        if project is not None:
            trial = project(trial)
        decrease = float(np.vdot(gradient, current - trial))
        if decrease > 0.0:
            f_trial = evaluate(trial)
            if f_trial <= f_current - ARMIJO_C * decrease:
                return True, trial, f_trial, alpha
        alpha *= 0.5
    return False, current, f_current, 0.0


def _loss_to_row(i, loss: LossBreakdown, step: float) -> TraceRow:
    return TraceRow(i, loss.pixel, loss.smooth, loss.explain, loss.total, step)


def optimize_pose(target: Panorama, source: Panorama, depth: DepthMap, init: Pose,
                  cam: CylindricalCamera, weights: LossWeights, cfg: OptimConfig,
                  mask=None, wrap: bool | None = None):
    """Minimize the multi-scale objective over the 6 pose parameters.

    Gradients are central differences over the pose vector; steps use
    backtracking line search, so the trace of accepted iterations is
    non-increasing in total loss.  Returns the best-seen pose and the trace.
    """
    masks = [mask] if mask is not None else None
    target_pyr, source_pyrs, mask_pyrs, cams = build_pyramids(target, [source], weights, cam, masks)
    depth_pyr = downsample_depth_pyramid(depth, weights.scales)

    def breakdown(vec) -> LossBreakdown:
        return total_loss_from_pyramids(target_pyr, source_pyrs, depth_pyr,
                                        [Pose.from_vector(vec)], weights,
                                        mask_pyrs, cams, wrap=wrap)

    def objective(vec) -> float:
        return breakdown(vec).total

    vec = init.as_vector()
    loss = breakdown(vec)
    if not np.isfinite(loss.total):
        raise ValueError("non-finite loss at the initial pose")
    trace = [_loss_to_row(0, loss, 0.0)]

    alpha = cfg.step_size
    for it in range(1, cfg.max_iters + 1):
        grad = numeric_gradient(objective, vec, cfg.fd_epsilon)
        accepted, vec_new, f_new, step = _backtrack(loss.total, objective, grad, vec, alpha)
        if not accepted:
            break
        alpha = step * 2.0
        prev_total = loss.total
        vec = vec_new
        loss = breakdown(vec)
        trace.append(_loss_to_row(it, loss, step))
        if prev_total - loss.total <= cfg.convergence_tol * max(abs(prev_total), 1e-30):
            break
    return Pose.from_vector(vec), trace


def _photometric_disparity_gradient(u, target, source_pyrs_at, poses, cam, mask_at,
                                    fd_epsilon, wrap):
    """Per-pixel disparity gradient of the summed photometric means.

    A pixel's residual depends only on its own disparity, so one warp with
    every disparity nudged up and one nudged down yields all central
    differences at once.
    """
    grad = np.zeros_like(u)
    for k, src in enumerate(source_pyrs_at):
        mask = mask_at[k] if mask_at is not None else None
        fields = []
        valids = []
        for sign in (+1.0, -1.0):
            u_p = np.clip(u + sign * fd_epsilon, 1e-12, None)
            dm = DepthMap(1.0 / u_p)
            synth, valid = inverse_warp(src, dm, poses[k], cam, wrap=wrap)
            fields.append(photometric_residuals(target, synth, valid, mask))
            valids.append(valid)
        dm0 = DepthMap(1.0 / np.clip(u, 1e-12, None))
        _, valid0 = inverse_warp(src, dm0, poses[k], cam, wrap=wrap)
        n = max(int(np.count_nonzero(valid0)), 1)
        both = valids[0] & valids[1] & valid0
        grad += np.where(both, (fields[0] - fields[1]) / (2.0 * fd_epsilon) / n, 0.0)
    return grad


def _descend_disparity(u, target, sources, poses, cam, weights, cfg, masks, wrap):
    """Projected gradient descent on one resolution level; returns (u, trace)."""
    u_min = 1.0 / cfg.depth_bounds[1]
    u_max = 1.0 / cfg.depth_bounds[0]
    scale_weights = LossWeights(weights.lambda_s, weights.lambda_e, weights.lambda_m, scales=1)

    def project(v):
        return np.clip(v, u_min, u_max)

    def breakdown(v) -> LossBreakdown:
        depth_pyr = [DepthMap(1.0 / v)]
        return total_loss_from_pyramids([target], [[s] for s in sources], depth_pyr,
                                        poses, scale_weights,
                                        [[m] for m in masks] if masks is not None else None,
                                        [cam], wrap=wrap)

    def objective(v) -> float:
        return breakdown(v).total

    u = project(u)
    loss = breakdown(u)
    if not np.isfinite(loss.total):
        raise ValueError("non-finite loss at the initial depth")
    trace = [_loss_to_row(0, loss, 0.0)]

    alpha = cfg.step_size
    for it in range(1, cfg.max_iters + 1):
        g_photo = _photometric_disparity_gradient(u, target, sources, poses, cam,
                                                  masks, cfg.fd_epsilon, wrap)
        # chain rule depth -> disparity: d = 1/u
        g_smooth = smooth_gradient(1.0 / u, scale_weights, target) * (-1.0 / u ** 2)
        grad = g_photo + scale_weights.smooth_weight * g_smooth
        accepted, u_new, f_new, step = _backtrack(loss.total, objective, grad, u, alpha,
                                                  project=project)
        if not accepted:
            break
        alpha = step * 2.0
        prev_total = loss.total
        u = u_new
        loss = breakdown(u)
        trace.append(_loss_to_row(it, loss, step))
        if prev_total - loss.total <= cfg.convergence_tol * max(abs(prev_total), 1e-30):
            break
    return u, trace


def _box2_grid(a):
    return a.reshape(a.shape[0] // 2, 2, a.shape[1] // 2, 2).mean(axis=(1, 3))


def optimize_depth(target: Panorama, sources, poses, init: DepthMap,
                   cam: CylindricalCamera, weights: LossWeights, cfg: OptimConfig,
                   masks=None, wrap: bool | None = None):
    """Minimize photometric + smoothness loss over per-pixel inverse depth.

    Disparity (1/depth) is the optimization variable, clamped to the
    configured depth bounds.  With ``weights.scales > 1`` the solve runs
    coarse to fine: coarser levels warm-start the next one, and the returned
    trace is the full-resolution stage (non-increasing in total loss).

    Invalid pixels of ``init`` are seeded with the median valid depth and
    optimized like any other; the returned map is valid everywhere.
    """
    if not sources:
        raise ValueError("need at least one source view")
    if len(sources) != len(poses):
        raise ValueError(f"{len(sources)} sources but {len(poses)} poses")

    d0 = init.depth.copy()
    if not init.valid.all():
        if not init.valid.any():
            raise ValueError("initial depth has no valid pixels")
        d0[~init.valid] = np.median(init.depth[init.valid])
    u_full = np.clip(1.0 / d0, 1.0 / cfg.depth_bounds[1], 1.0 / cfg.depth_bounds[0])

    target_pyr = downsample_pyramid(target, weights.scales)
    source_pyrs = [downsample_pyramid(s, weights.scales) for s in sources]
    mask_pyrs = [downsample_mask_pyramid(m, weights.scales) for m in masks] if masks else None
    cams = [cam.at_scale(s) for s in range(weights.scales)]

    u = u_full
    for _ in range(weights.scales - 1):
        u = _box2_grid(u)

    trace = []
    for s in reversed(range(weights.scales)):
        masks_s = [mp[s] for mp in mask_pyrs] if mask_pyrs is not None else None
        sources_s = [sp[s] for sp in source_pyrs]
        u, trace = _descend_disparity(u, target_pyr[s], sources_s, poses, cams[s],
                                      weights, cfg, masks_s, wrap)
        if s > 0:
            u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)
    return DepthMap(1.0 / u), trace


def optimize_alternating(target: Panorama, sources, poses_init, depth_init: DepthMap,
                         cam: CylindricalCamera, weights: LossWeights, cfg: OptimConfig,
                         rounds: int = 2, masks=None, wrap: bool | None = None):
    """Alternate pose and depth refinement.

    Each round first refines every source pose against the current depth,
    then refines the depth against the current poses.  Convergence of the
    alternation is not guaranteed; each inner solve is monotone on its own.
    Returns ``(poses, depth, trace_of_last_depth_pass)``.
    """
    poses = list(poses_init)
    depth = depth_init
    trace = []
    for _ in range(rounds):
        for k, src in enumerate(sources):
            mask = masks[k] if masks is not None else None
            poses[k], _ = optimize_pose(target, src, depth, poses[k], cam, weights, cfg,
                                        mask=mask, wrap=wrap)
        depth, trace = optimize_depth(target, sources, poses, depth, cam, weights, cfg,
                                      masks=masks, wrap=wrap)
    return poses, depth, trace

"""Command-line surface wiring the library into reproducible pipelines.

Exit codes: 0 success, 2 validation failure, 3 i/o failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import re
import sys

import numpy as np
import yaml

from . import dataprep, fileio, metrics, optim, synthesis
from .config import Config, load_config
from .geometry import CylindricalCamera, Pose
from .panorama import Panorama, downsample_depth_pyramid
from .synthetic import CylinderScene, render_cylindrical


def _on_off(value: str) -> bool:
    if value == "on":
        return True
    if value == "off":
        return False
    raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {value!r}")


def _load_config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config.default()
    w = cfg.weights
    for name in ("lambda_s", "lambda_e", "lambda_m", "scales"):
        flag = getattr(args, name, None)
        if flag is not None:
            w = dataclasses.replace(w, **{name: flag})
    m = cfg.metrics
    if getattr(args, "median_scale", None) is not None:
        m = dataclasses.replace(m, median_scale=args.median_scale)
    if getattr(args, "cap", None) is not None:
        m = dataclasses.replace(m, cap=args.cap)
    if getattr(args, "snippet", None) is not None:
        m = dataclasses.replace(m, snippet=args.snippet)
    return dataclasses.replace(cfg, weights=w, metrics=m)


def _camera(args, cfg) -> CylindricalCamera:
    if getattr(args, "camera", None):
        cam = fileio.read_camera(args.camera)
        if not isinstance(cam, CylindricalCamera):
            raise ValueError(f"{args.camera}: expected a cylindrical camera")
        return cam
    return cfg.camera


def _out_dir(args) -> str:
    if not getattr(args, "out", None):
        raise ValueError("--out directory is required for this command")
    return fileio.ensure_dir(args.out)


def _breakdown_text(bd: synthesis.LossBreakdown) -> str:
    lines = [f"pixel   {bd.pixel!r}",
             f"smooth  {bd.smooth!r}",
             f"explain {bd.explain!r}",
             f"total   {bd.total!r}"]
    for s, t in enumerate(bd.per_scale):
        lines.append(f"scale {s}: pixel {t.pixel!r} smooth {t.smooth!r} "
                     f"explain {t.explain!r} total {t.total!r}")
    return "\n".join(lines)


def _read_sources(paths):
    return [fileio.read_image(p) for p in paths]


def _relative_poses(args, n_sources):
    """Relative transforms (target frame -> source frame), one per source."""
    _, poses = fileio.read_trajectory(args.poses)
    if len(poses) != n_sources:
        raise ValueError(f"{args.poses}: {len(poses)} poses for {n_sources} sources")
    return poses


def cmd_warp(args) -> int:
    cfg = _load_config(args)
    cam = _camera(args, cfg)
    source = fileio.read_image(args.source)
    depth = fileio.read_depth(args.depth)
    pose = fileio.read_pose(args.pose)
    wrap = True if args.wrap is None else args.wrap
    synth, valid = synthesis.inverse_warp(source, depth, pose, cam, wrap=wrap)
    out = _out_dir(args)
    fileio.write_image(os.path.join(out, "synthesized.png"), synth)
    fileio.write_image(os.path.join(out, "valid.png"), Panorama(valid.astype(float)))
    print(f"synthesized {synth.width_px}x{synth.height_px} view, "
          f"{int(valid.sum())}/{valid.size} valid pixels -> {out}")
    return 0


def cmd_loss(args) -> int:
    cfg = _load_config(args)
    cam = _camera(args, cfg)
    target = fileio.read_image(args.target)
    sources = _read_sources(args.source)
    poses = _relative_poses(args, len(sources))
    depth = fileio.read_depth(args.depth)
    masks = [fileio.read_mask(p) for p in args.mask] if args.mask else None
    depth_pyr = downsample_depth_pyramid(depth, cfg.weights.scales)
    bd = synthesis.total_loss(target, sources, depth_pyr, poses, cfg.weights,
                              masks=masks, cam=cam, wrap=args.wrap)
    text = _breakdown_text(bd)
    print(text)
    if args.out:
        with open(os.path.join(fileio.ensure_dir(args.out), "loss.txt"), "w") as f:
            f.write(text + "\n")
    return 0


def _fov_masks(args, cam, n_sources):
    if args.fov is None or args.fov >= 360.0:
        return None
    mask = dataprep.azimuth_sector_mask(cam, args.fov)
    return [mask] * n_sources


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    cam = _camera(args, cfg)
    target = fileio.read_image(args.target)
    sources = _read_sources(args.source)
    depth = fileio.read_depth(args.depth)
    out = _out_dir(args)
    wrap = args.wrap
    if wrap is None:
        wrap = not (args.fov is not None and args.fov < 360.0)
    masks = _fov_masks(args, cam, len(sources))

    if args.mode == "pose":
        if len(sources) != 1:
            raise ValueError("pose mode optimizes a single source view")
        init = fileio.read_pose(args.pose_init) if args.pose_init else Pose.identity()
        mask = masks[0] if masks else None
        pose, trace = optim.optimize_pose(target, sources[0], depth, init, cam,
                                          cfg.weights, cfg.optim, mask=mask, wrap=wrap)
        fileio.write_pose(os.path.join(out, "pose.yaml"), pose)
    elif args.mode == "depth":
        poses = _relative_poses(args, len(sources))
        refined, trace = optim.optimize_depth(target, sources, poses, depth, cam,
                                              cfg.weights, cfg.optim, masks=masks, wrap=wrap)
        fileio.write_depth(os.path.join(out, "depth.pfm"), refined)
    elif args.mode == "alternate":
        poses = _relative_poses(args, len(sources))
        poses, refined, trace = optim.optimize_alternating(
            target, sources, poses, depth, cam, cfg.weights, cfg.optim,
            masks=masks, wrap=wrap)
        fileio.write_depth(os.path.join(out, "depth.pfm"), refined)
        fileio.write_trajectory(os.path.join(out, "poses.txt"), poses)
    else:
        raise ValueError(f"unknown mode {args.mode!r}")

    with open(os.path.join(out, "trace.csv"), "w") as f:
        f.write(optim.trace_to_csv(trace))
    print(f"{args.mode} optimization: {len(trace) - 1} accepted steps, "
          f"total {trace[0].total!r} -> {trace[-1].total!r}")
    return 0


def cmd_eval_depth(args) -> int:
    cfg = _load_config(args)
    pred = fileio.read_depth(args.pred)
    gt = fileio.read_depth(args.gt)
    m = metrics.depth_metrics(pred, gt, median_scale=cfg.metrics.median_scale,
                              cap=cfg.metrics.cap)
    print(metrics.DepthMetrics.CSV_HEADER)
    print(m.to_csv_row())
    print(m.summary())
    if args.out:
        with open(os.path.join(fileio.ensure_dir(args.out), "depth_metrics.csv"), "w") as f:
            f.write(metrics.DepthMetrics.CSV_HEADER + "\n" + m.to_csv_row() + "\n")
    return 0


def cmd_eval_pose(args) -> int:
    cfg = _load_config(args)
    _, pred = fileio.read_trajectory(args.pred)
    _, gt = fileio.read_trajectory(args.gt)
    mean, std = metrics.ate(pred, gt, snippet_len=cfg.metrics.snippet)
    print("ate_mean,ate_std")
    print(f"{mean:.6f},{std:.6f}")
    if args.out:
        with open(os.path.join(fileio.ensure_dir(args.out), "ate.csv"), "w") as f:
            f.write(f"ate_mean,ate_std\n{mean:.6f},{std:.6f}\n")
    return 0


def cmd_stitch(args) -> int:
    cfg = _load_config(args)
    cam = _camera(args, cfg)
    pin_cam = fileio.read_camera(args.pinhole)
    views = [fileio.read_image(p, cyclic=False) for p in args.views]
    pano = dataprep.stitch_pinhole_to_cylinder(views, pin_cam, cam)
    out = _out_dir(args)
    fileio.write_image(os.path.join(out, "panorama.png"), pano)
    print(f"stitched {len(views)} views into {pano.width_px}x{pano.height_px} panorama")
    return 0


def cmd_reproject(args) -> int:
    cfg = _load_config(args)
    cam = _camera(args, cfg)
    eq = fileio.read_image(args.input)
    pano = dataprep.equirect_to_cylinder(eq, cam)
    out = _out_dir(args)
    fileio.write_image(os.path.join(out, "panorama.png"), pano)
    print(f"reprojected {eq.width_px}x{eq.height_px} frame to "
          f"{pano.width_px}x{pano.height_px} panorama")
    return 0


_FRAME_RE = re.compile(r"(\d+)\.(png|PNG)$")


def _numbered_frames(directory):
    frames = []
    for name in sorted(os.listdir(directory)):
        m = _FRAME_RE.search(name)
        if m:
            frames.append((int(m.group(1)), os.path.join(directory, name)))
    frames.sort()
    return frames


def cmd_sequences(args) -> int:
    cfg = _load_config(args)
    cam = _camera(args, cfg)
    found = _numbered_frames(args.frames)
    if not found:
        raise ValueError(f"no numbered .png frames found in {args.frames}")
    ids, poses = fileio.read_trajectory(args.trajectory)
    pose_by_id = dict(zip(ids, poses))

    ordered_poses = [pose_by_id[fid] for fid, _ in found if fid in pose_by_id]
    if len(ordered_poses) != len(found):
        raise ValueError("trajectory does not cover every frame id")
    static = set(np.asarray([fid for fid, _ in found])[
        dataprep.detect_static_frames(ordered_poses,
                                      cfg.dataprep.translation_thresh,
                                      cfg.dataprep.rotation_thresh)])

    frames = []
    for fid, path in found:
        if fid in static:
            continue
        img = fileio.read_image(path)
        if (img.height_px, img.width_px) != (cam.height_px, cam.width_px):
            raise ValueError(f"{path}: frame size does not match the camera")
        frames.append((fid, img))

    depths = None
    if args.depths:
        depths = {}
        for fid, _ in frames:
            p = os.path.join(args.depths, f"{fid:06d}.pfm")
            if os.path.exists(p):
                depths[fid] = fileio.read_depth(p)

    records = dataprep.make_sequences(frames, cfg.dataprep.seq_len, cfg.dataprep.stride,
                                      depths=depths, poses=pose_by_id)
    out = _out_dir(args)
    for rec in records:
        seq_dir = fileio.ensure_dir(os.path.join(out, f"seq_{rec.target_id:06d}"))
        fileio.write_image(os.path.join(seq_dir, "target.png"), rec.target)
        for k, src in enumerate(rec.sources):
            fileio.write_image(os.path.join(seq_dir, f"source_{k}.png"), src)
        if rec.gt_depth is not None:
            fileio.write_depth(os.path.join(seq_dir, "depth.pfm"), rec.gt_depth)
        if rec.gt_poses is not None:
            fileio.write_trajectory(os.path.join(seq_dir, "poses.txt"),
                                    rec.gt_poses, rec.frame_ids)
        with open(os.path.join(seq_dir, "manifest.yaml"), "w") as f:
            yaml.safe_dump({"frame_ids": rec.frame_ids, "target_id": rec.target_id,
                            "cyclic": True, "camera": fileio.camera_to_dict(
                                CylindricalCamera(rec.target.width_px, rec.target.height_px,
                                                  cam.h_min, cam.h_max))}, f)
    print(f"{len(records)} sequences written to {out} "
          f"({len(static)} static frames dropped)")
    return 0


def cmd_crop(args) -> int:
    if args.fov is None:
        raise ValueError("--fov is required for crop")
    pano = fileio.read_image(args.input)
    cropped = dataprep.crop_fov(pano, args.fov, args.center_azimuth)
    out = _out_dir(args)
    fileio.write_image(os.path.join(out, "cropped.png"), cropped)
    with open(os.path.join(out, "cropped.yaml"), "w") as f:
        yaml.safe_dump({"cyclic": False, "fov_deg": args.fov,
                        "center_azimuth_deg": args.center_azimuth,
                        "source_width_px": pano.width_px}, f)
    print(f"cropped {args.fov} deg ({cropped.width_px} columns) -> {out}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    eps = cfg.optim.fd_epsilon
    ok = True

    p = np.array([1.0, -2.0, 3.0])
    g = optim.numeric_gradient(lambda v: float(np.sum(v * v)), p, eps)
    rel = float(np.linalg.norm(g - 2 * p) / np.linalg.norm(2 * p))
    passed = rel < 1e-6
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} quadratic objective: relative error {rel:.3e}")

    scene = CylinderScene.random(seed=args.seed, radius=4.0)
    cam = CylindricalCamera(64, 16)
    target, depth = render_cylindrical(scene, cam)
    src_world = Pose(np.array([0.05, 0.0, 0.02]), np.array([0.0, 0.03, 0.0]))
    source, _ = render_cylindrical(scene, cam, src_world)
    weights = dataclasses.replace(cfg.weights, scales=min(cfg.weights.scales, 2))
    depth_pyr = downsample_depth_pyramid(depth, weights.scales)

    def objective(vec):
        return synthesis.total_loss(target, [source], depth_pyr,
                                    [Pose.from_vector(vec)], weights, cam=cam).total

    v = src_world.inverse().as_vector() + np.array([0.02, 0.01, -0.015, 0.004, 0.008, -0.003])
    g1 = optim.numeric_gradient(objective, v, eps)
    g2 = optim.numeric_gradient(objective, v, eps / 10.0)
    rel = float(np.linalg.norm(g1 - g2) / max(np.linalg.norm(g1), np.linalg.norm(g2)))
    passed = rel < 1e-3
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} pose objective: step-size consistency {rel:.3e}")
    return 0 if ok else 2


def _seam_profile(target, sources, rel_poses, depth, cam, wrap):
    num = np.zeros(target.width_px)
    den = np.zeros(target.width_px)
    for src, pose in zip(sources, rel_poses):
        synth, valid = synthesis.inverse_warp(src, depth, pose, cam, wrap=wrap)
        err = np.abs(synth.data - target.data).mean(axis=2)
        num += np.where(valid, err, 0.0).sum(axis=0)
        den += valid.sum(axis=0)
    return num / np.maximum(den, 1)


def cmd_seam_check(args) -> int:
    cfg = _load_config(args)
    seq = args.seq
    with open(os.path.join(seq, "manifest.yaml")) as f:
        manifest = yaml.safe_load(f)
    if not manifest.get("cyclic", False):
        raise ValueError(f"{seq}: sequence is non-cyclic (cropped); seam check needs "
                         "full panoramas")
    cam = fileio.camera_from_dict(manifest["camera"])
    target = fileio.read_image(os.path.join(seq, "target.png"))
    ids = manifest["frame_ids"]
    target_id = manifest["target_id"]
    sources = []
    k = 0
    while os.path.exists(os.path.join(seq, f"source_{k}.png")):
        sources.append(fileio.read_image(os.path.join(seq, f"source_{k}.png")))
        k += 1
    if not sources:
        raise ValueError(f"{seq}: no source frames found")
    depth = fileio.read_depth(os.path.join(seq, "depth.pfm"))
    traj_ids, poses = fileio.read_trajectory(os.path.join(seq, "poses.txt"))
    world = dict(zip(traj_ids, poses))
    src_ids = [i for i in ids if i != target_id]
    rel = [world[i].inverse().compose(world[target_id]) for i in src_ids[:len(sources)]]

    prof_wrap = _seam_profile(target, sources, rel, depth, cam, wrap=True)
    prof_nowrap = _seam_profile(target, sources, rel, depth, cam, wrap=False)
    w = target.width_px
    seam_cols = list(range(4)) + list(range(w - 4, w))
    mean_wrap = float(prof_wrap[seam_cols].mean())
    mean_nowrap = float(prof_nowrap[seam_cols].mean())
    print(f"seam columns ({len(seam_cols)}): wrap {mean_wrap!r}  no-wrap {mean_nowrap!r}")
    if args.out:
        with open(os.path.join(fileio.ensure_dir(args.out), "seam_profile.csv"), "w") as f:
            f.write("column,err_wrap,err_nowrap\n")
            for j in range(w):
                f.write(f"{j},{prof_wrap[j]!r},{prof_nowrap[j]!r}\n")
    return 0


def _add_common(sp, camera=True):
    sp.add_argument("--config", help="YAML configuration file")
    sp.add_argument("--seed", type=int, default=0, help="seed for generated test data")
    if camera:
        sp.add_argument("--camera", help="camera YAML file (overrides config)")


def _add_weight_flags(sp):
    sp.add_argument("--scales", type=int)
    sp.add_argument("--lambda-s", dest="lambda_s", type=float)
    sp.add_argument("--lambda-e", dest="lambda_e", type=float)
    sp.add_argument("--lambda-m", dest="lambda_m", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cylsfm",
                                     description="cylindrical-panorama SfM pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("warp", help="synthesize a view from source + depth + pose")
    _add_common(sp)
    sp.add_argument("--source", required=True)
    sp.add_argument("--depth", required=True)
    sp.add_argument("--pose", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--wrap", type=_on_off, default=None)
    sp.set_defaults(func=cmd_warp)

    sp = sub.add_parser("loss", help="evaluate the multi-scale objective")
    _add_common(sp)
    _add_weight_flags(sp)
    sp.add_argument("--target", required=True)
    sp.add_argument("--source", action="append", required=True)
    sp.add_argument("--depth", required=True)
    sp.add_argument("--poses", required=True, help="relative poses, one record per source")
    sp.add_argument("--mask", action="append")
    sp.add_argument("--out")
    sp.add_argument("--wrap", type=_on_off, default=None)
    sp.set_defaults(func=cmd_loss)

    sp = sub.add_parser("optimize", help="refine pose and/or depth photometrically")
    _add_common(sp)
    _add_weight_flags(sp)
    sp.add_argument("--mode", choices=("pose", "depth", "alternate"), required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--source", action="append", required=True)
    sp.add_argument("--depth", required=True, help="target depth (pose mode) or init")
    sp.add_argument("--pose-init", dest="pose_init")
    sp.add_argument("--poses", help="relative pose records (depth/alternate modes)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--fov", type=float, help="restrict the objective to an azimuth sector")
    sp.add_argument("--wrap", type=_on_off, default=None)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("eval-depth", help="depth metrics against ground truth")
    _add_common(sp, camera=False)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--median-scale", dest="median_scale", type=_on_off, default=None)
    sp.add_argument("--cap", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval_depth)

    sp = sub.add_parser("eval-pose", help="trajectory error against ground truth")
    _add_common(sp, camera=False)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--snippet", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval_pose)

    sp = sub.add_parser("stitch", help="stitch 4 perspective views into a panorama")
    _add_common(sp)
    sp.add_argument("--views", nargs=4, required=True,
                    help="front/left/back/right views (yaw 0/90/180/270)")
    sp.add_argument("--pinhole", required=True, help="pinhole camera YAML")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_stitch)

    sp = sub.add_parser("reproject", help="equirectangular frame to cylindrical panorama")
    _add_common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reproject)

    sp = sub.add_parser("sequences", help="format frames into training sequences")
    _add_common(sp)
    sp.add_argument("--frames", required=True, help="directory of numbered .png frames")
    sp.add_argument("--trajectory", required=True, help="world pose per frame id")
    sp.add_argument("--depths", help="optional directory of <id>.pfm depth maps")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sequences)

    sp = sub.add_parser("crop", help="extract an azimuth sector as a non-cyclic image")
    _add_common(sp, camera=False)
    sp.add_argument("--input", required=True)
    sp.add_argument("--fov", type=float, required=True)
    sp.add_argument("--center-azimuth", dest="center_azimuth", type=float, default=0.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_crop)

    sp = sub.add_parser("gradcheck", help="finite-difference self-tests")
    _add_common(sp, camera=False)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("seam-check", help="per-column photometric error across the seam")
    _add_common(sp, camera=False)
    sp.add_argument("--seq", required=True, help="sequence directory with manifest")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_seam_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

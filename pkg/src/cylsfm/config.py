"""Run configuration: one YAML file validated against every module's preconditions."""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .fileio import camera_from_dict, camera_to_dict
from .geometry import CylindricalCamera
from .optim import OptimConfig
from .synthesis import LossWeights


@dataclass(frozen=True)
class MetricSettings:
    median_scale: bool = True
    cap: float = 80.0
    snippet: int = 3

    def __post_init__(self):
        if self.cap <= 0:
            raise ValueError(f"depth cap must be positive, got {self.cap}")
        if self.snippet < 2:
            raise ValueError(f"snippet length must be >= 2, got {self.snippet}")


@dataclass(frozen=True)
class DataprepSettings:
    translation_thresh: float = 0.05
    rotation_thresh: float = 0.005
    seq_len: int = 3
    stride: int = 1

    def __post_init__(self):
        if self.translation_thresh < 0 or self.rotation_thresh < 0:
            raise ValueError("static thresholds must be nonnegative")
        if self.seq_len < 3 or self.seq_len % 2 == 0:
            raise ValueError(f"seq_len must be odd and >= 3, got {self.seq_len}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass(frozen=True)
class IOPaths:
    input_dir: str | None = None
    output_dir: str | None = None


@dataclass(frozen=True)
class Config:
    camera: CylindricalCamera
    weights: LossWeights
    optim: OptimConfig
    metrics: MetricSettings
    dataprep: DataprepSettings
    io: IOPaths

    @classmethod
    def default(cls) -> "Config":
        return cls(camera=CylindricalCamera(512, 128),
                   weights=LossWeights(),
                   optim=OptimConfig(),
                   metrics=MetricSettings(),
                   dataprep=DataprepSettings(),
                   io=IOPaths())


def _check_keys(d: dict, allowed, section: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValueError(f"unknown config keys in {section}: {sorted(unknown)}")


def config_to_dict(cfg: Config) -> dict:
    cam = camera_to_dict(cfg.camera)
    cam.pop("type")
    return {
        "camera": cam,
        "weights": {"lambda_s": cfg.weights.lambda_s, "lambda_e": cfg.weights.lambda_e,
                    "lambda_m": cfg.weights.lambda_m, "scales": cfg.weights.scales},
        "optim": {"max_iters": cfg.optim.max_iters, "step_size": cfg.optim.step_size,
                  "fd_epsilon": cfg.optim.fd_epsilon,
                  "convergence_tol": cfg.optim.convergence_tol,
                  "depth_min": cfg.optim.depth_bounds[0],
                  "depth_max": cfg.optim.depth_bounds[1]},
        "metrics": {"median_scale": cfg.metrics.median_scale, "cap": cfg.metrics.cap,
                    "snippet": cfg.metrics.snippet},
        "dataprep": {"translation_thresh": cfg.dataprep.translation_thresh,
                     "rotation_thresh": cfg.dataprep.rotation_thresh,
                     "seq_len": cfg.dataprep.seq_len, "stride": cfg.dataprep.stride},
        "io": {"input_dir": cfg.io.input_dir, "output_dir": cfg.io.output_dir},
    }


def config_from_dict(d: dict) -> Config:
    base = config_to_dict(Config.default())
    _check_keys(d, base, "config")
    merged = {}
    for section, defaults in base.items():
        given = d.get(section, {})
        if given is None:
            given = {}
        _check_keys(given, defaults, section)
        merged[section] = {**defaults, **given}

    cam = camera_from_dict({"type": "cylindrical", **merged["camera"]})
    weights = LossWeights(**merged["weights"])
    o = merged["optim"]
    optim = OptimConfig(max_iters=int(o["max_iters"]), step_size=float(o["step_size"]),
                        fd_epsilon=float(o["fd_epsilon"]),
                        convergence_tol=float(o["convergence_tol"]),
                        depth_bounds=(float(o["depth_min"]), float(o["depth_max"])))
    metrics = MetricSettings(**merged["metrics"])
    dataprep = DataprepSettings(**merged["dataprep"])
    io = IOPaths(**merged["io"])
    return Config(cam, weights, optim, metrics, dataprep, io)


def load_config(path) -> Config:
    with open(path) as f:
        d = yaml.safe_load(f)
    return config_from_dict(d or {})


def save_config(path, cfg: Config):
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)

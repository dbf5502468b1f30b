"""Run configuration: one JSON document with a section per module.

Unknown keys are rejected with their dotted path so typos surface early.
Every section is optional; missing fields keep their defaults.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import CoverageZone, FeatureConfig
from .learn.train import TrainConfig
from .lidar_sim import LidarConfig
from .mmwave import ArrayGeometry, OfdmConfig
from .raytrace import TraceConfig
from .scene import SceneConfig

NOISE_MODES = ("none", "noisy")
# (sigma_G, sigma_L) per noise mode
NOISE_LEVELS = {"none": (0.0, 0.0), "noisy": (3.0, 0.1)}


@dataclass(frozen=True)
class CodebookConfig:
    """Arrays and candidate codebooks. Steered grids are given in degrees
    in world coordinates (azimuth from +x, elevation from the horizon)."""

    tx_shape: tuple = (16, 16)
    tx_yaw_deg: float = 90.0  # BS array faces +y, into the street
    rx_shape: tuple = (4, 4)
    tx_steer_azimuth_deg: tuple = tuple(range(10, 171, 10))
    tx_steer_elevation_deg: tuple = (-15.0, -8.0, -3.0)
    rx_steer_azimuth_deg: tuple = tuple(range(-180, 180, 20))  # relative to the heading
    rx_steer_elevation_deg: tuple = (0.0, 10.0)
    tx_random: int = 64
    rx_random: int = 16
    design_episodes: int = 500
    min_count: int = 5

    def __post_init__(self):
        for name in ("tx_shape", "rx_shape"):
            shape = tuple(int(v) for v in getattr(self, name))
            if len(shape) != 2 or min(shape) < 1:
                raise ValueError(f"codebook.{name} must be two positive integers")
            object.__setattr__(self, name, shape)
        for name in ("tx_steer_azimuth_deg", "tx_steer_elevation_deg",
                     "rx_steer_azimuth_deg", "rx_steer_elevation_deg"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.design_episodes < 1:
            raise ValueError("codebook.design_episodes must be >= 1")
        if self.min_count < 0:
            raise ValueError("codebook.min_count must be >= 0")

    def tx_array(self) -> ArrayGeometry:
        return ArrayGeometry(*self.tx_shape, yaw=np.deg2rad(self.tx_yaw_deg))

    def rx_array(self, heading: float = 0.0) -> ArrayGeometry:
        return ArrayGeometry(*self.rx_shape, yaw=heading)

    def tx_angles(self):
        return [(np.deg2rad(a), np.deg2rad(e))
                for a in self.tx_steer_azimuth_deg for e in self.tx_steer_elevation_deg]

    def rx_angles(self):
        return [(np.deg2rad(a), np.deg2rad(e))
                for a in self.rx_steer_azimuth_deg for e in self.rx_steer_elevation_deg]

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in vars(self).items()}


@dataclass(frozen=True)
class ModelConfig:
    dropout: float = 0.3
    detector_epochs: Optional[int] = None  # None: train.epochs
    selector_epochs: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("model.dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return dict(vars(self))


@dataclass(frozen=True)
class EvalConfig:
    M: tuple = (1, 2, 5, 10, 20, 30, 50, 100)
    rt_floor: float = 0.9  # R_T level that defines the overhead reduction factor

    def __post_init__(self):
        object.__setattr__(self, "M", tuple(int(m) for m in self.M))
        if not self.M or min(self.M) < 1:
            raise ValueError("eval.M must be a non-empty list of positive integers")
        if not 0.0 < self.rt_floor <= 1.0:
            raise ValueError("eval.rt_floor must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return {"M": list(self.M), "rt_floor": self.rt_floor}


def default_zone() -> CoverageZone:
    return CoverageZone(0.0, -1.0, 160.0, 31.0, 6.0)


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    trace: TraceConfig = field(default_factory=TraceConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    codebook: CodebookConfig = field(default_factory=CodebookConfig)
    zone: CoverageZone = field(default_factory=default_zone)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    episodes: int = 2000
    split_fraction: float = 0.8
    seed: int = 0
    noise: str = "none"

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}, got {self.noise!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def sigma_G(self) -> float:
        return NOISE_LEVELS[self.noise][0]

    @property
    def sigma_L(self) -> float:
        return NOISE_LEVELS[self.noise][1]

    def effective_lidar(self) -> LidarConfig:
        return LidarConfig.from_dict({**self.lidar.to_dict(), "sigma_L": self.sigma_L})

    def effective_features(self) -> FeatureConfig:
        return FeatureConfig.from_dict({**self.features.to_dict(), "sigma_G": self.sigma_G})

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict() for name in SECTIONS} | {
            "episodes": self.episodes, "split_fraction": self.split_fraction,
            "seed": self.seed, "noise": self.noise}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        merged = _merge(cls().to_dict(), d, "")
        kwargs = {}
        for name, sec_cls in SECTIONS.items():
            try:
                kwargs[name] = sec_cls.from_dict(merged[name])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"config section {name!r}: {exc}") from None
        return cls(**kwargs, episodes=int(merged["episodes"]),
                   split_fraction=float(merged["split_fraction"]),
                   seed=int(merged["seed"]), noise=merged["noise"])

    def replace(self, **overrides) -> "RunConfig":
        return RunConfig.from_dict(_merge(self.to_dict(), overrides, ""))

    def hash(self) -> str:
        """sha256 of the canonical JSON form; equal configs hash equally."""
        return config_hash(self.to_dict())


SECTIONS = {
    "scene": SceneConfig, "lidar": LidarConfig, "trace": TraceConfig, "ofdm": OfdmConfig,
    "codebook": CodebookConfig, "zone": CoverageZone, "features": FeatureConfig,
    "train": TrainConfig, "model": ModelConfig, "eval": EvalConfig,
}


def _merge(base, override, path):
    if not isinstance(override, dict):
        raise ValueError(f"config {path or 'root'}: expected an object")
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ValueError(f"unknown config field {where!r}")
        if path == "" and key in SECTIONS:
            out[key] = _merge(out[key], value, where)
        else:
            out[key] = value
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(d: dict) -> str:
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()


def load_config(path=None, **overrides) -> RunConfig:
    d = {}
    if path is not None:
        with open(path) as fh:
            d = json.load(fh)
    cfg = RunConfig.from_dict(d)
    return cfg.replace(**overrides) if overrides else cfg

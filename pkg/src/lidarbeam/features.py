"""Fixed-grid 3D histogram features from LIDAR point clouds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CoverageZone:
    x1: float
    y1: float
    x2: float
    y2: float
    h: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2 and self.h > 0):
            raise ValueError(f"invalid coverage zone {self}")

    @property
    def lo(self):
        return np.array([self.x1, self.y1, 0.0])

    @property
    def hi(self):
        return np.array([self.x2, self.y2, self.h])

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return dict(vars(self))


@dataclass(frozen=True)
class FeatureConfig:
    b_x: int = 6
    b_y: int = 6
    b_z: int = 3
    d_max: float = 25.0
    ground_z_min: float = 0.1
    sigma_G: float = 0.0

    def __post_init__(self):
        if min(self.b_x, self.b_y, self.b_z) < 1:
            raise ValueError("quantizer bits must be >= 1")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if self.sigma_G < 0:
            raise ValueError("sigma_G must be non-negative")

    @property
    def shape(self):
        return (2 ** self.b_x, 2 ** self.b_y, 2 ** self.b_z)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return dict(vars(self))


@dataclass(frozen=True)
class HistogramGrid:
    counts: np.ndarray  # (2^bx, 2^by, 2^bz) integer counts
    bs_bin: tuple

    def to_sparse(self) -> np.ndarray:
        """(n, 4) int rows (i, j, k, count) for the nonzero bins."""
        idx = np.argwhere(self.counts > 0)
        return np.column_stack([idx, self.counts[tuple(idx.T)]]).astype(np.int64).reshape(-1, 4)

    @classmethod
    def from_sparse(cls, quads, shape, bs_bin) -> "HistogramGrid":
        counts = np.zeros(shape, dtype=np.int64)
        quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
        counts[quads[:, 0], quads[:, 1], quads[:, 2]] = quads[:, 3]
        return cls(counts, tuple(int(v) for v in bs_bin))


def apply_gnss_noise(p, sigma_G: float, seed) -> np.ndarray:
    """Position estimate with i.i.d. N(0, sigma_G^2 / 3) error per axis."""
    p = np.asarray(p, dtype=float)
    if sigma_G < 0:
        raise ValueError("sigma_G must be non-negative")
    if sigma_G == 0:
        return p.copy()
    rng = np.random.default_rng(seed)
    return p + rng.normal(0.0, sigma_G / np.sqrt(3.0), size=p.shape)


def quantize(coords, lo, hi, bits) -> np.ndarray:
    n = 2 ** np.asarray(bits)
    idx = np.floor((coords - lo) / (hi - lo) * n).astype(np.int64)
    return np.clip(idx, 0, n - 1)


def sensor_filter(points, ego, cfg: FeatureConfig) -> np.ndarray:
    """Mask of points kept by the ground and range filters."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    keep = points[:, 2] >= cfg.ground_z_min
    keep &= np.linalg.norm(points - np.asarray(ego, dtype=float), axis=1) <= cfg.d_max
    return keep


def voxelize(points, zone: CoverageZone, ego, cfg: FeatureConfig, bs_position=None) -> HistogramGrid:
    """Count points per bin of the zone grid after the ground, range and
    outside-zone filters. ``points`` may be a PointCloud or a (D, 3) array."""
    pts = np.asarray(getattr(points, "points", points), dtype=float).reshape(-1, 3)
    bits = np.array([cfg.b_x, cfg.b_y, cfg.b_z])
    counts = np.zeros(cfg.shape, dtype=np.int64)
    pts = pts[sensor_filter(pts, ego, cfg)]
    lo, hi = zone.lo, zone.hi
    pts = pts[np.all((pts >= lo) & (pts <= hi), axis=1)]
    if len(pts):
        idx = quantize(pts, lo, hi, bits)
        np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    if bs_position is None:
        bs_bin = (0, 0, 0)
    else:
        b = np.clip(np.asarray(bs_position, dtype=float), lo, hi)
        bs_bin = tuple(int(v) for v in quantize(b[None], lo, hi, bits)[0])
    return HistogramGrid(counts, bs_bin)


def encode_input(grid: HistogramGrid) -> np.ndarray:
    """(2^bx, 2^by, 2^bz) float32 tensor, log-compressed counts in [0, 1];
    z-slices act as input channels."""
    c = np.minimum(np.asarray(getattr(grid, "counts", grid)), 255)
    return (np.log1p(c) / np.log(256.0)).astype(np.float32)

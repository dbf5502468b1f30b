"""Rotating multi-beam LIDAR mounted on the ego vehicle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import Scene


def _default_elevations():
    return tuple(float(e) for e in np.linspace(-24.8, 2.0, 64))


@dataclass(frozen=True)
class LidarConfig:
    azimuth_resolution: float = 0.1728  # degrees
    elevation_angles: tuple = field(default_factory=_default_elevations)  # degrees
    max_range: float = 120.0
    sensor_height_offset: float = 1.0  # above the roof top-center
    sigma_L: float = 0.1

    def __post_init__(self):
        if self.azimuth_resolution <= 0:
            raise ValueError("azimuth_resolution must be positive")
        if self.sigma_L < 0:
            raise ValueError("sigma_L must be non-negative")
        object.__setattr__(self, "elevation_angles", tuple(float(e) for e in self.elevation_angles))

    @property
    def n_azimuth(self) -> int:
        return max(int(round(360.0 / self.azimuth_resolution)), 1)

    @classmethod
    def from_dict(cls, d: dict) -> "LidarConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return {"azimuth_resolution": self.azimuth_resolution,
                "elevation_angles": list(self.elevation_angles),
                "max_range": self.max_range,
                "sensor_height_offset": self.sensor_height_offset,
                "sigma_L": self.sigma_L}


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (D, 3), world coordinates

    def __len__(self):
        return len(self.points)

    def to_xyz(self, path) -> None:
        np.savetxt(path, np.asarray(self.points, dtype=float).reshape(-1, 3), fmt="%.6f", delimiter=" ")

    @classmethod
    def from_xyz(cls, path) -> "PointCloud":
        pts = np.loadtxt(path, ndmin=2).reshape(-1, 3)
        return cls(pts)


def sensor_origin(scene: Scene, config: LidarConfig) -> np.ndarray:
    if scene.ego_cuboid is not None:
        base = scene.lidar_origin_base
    else:
        base = np.asarray(scene.ego_position, dtype=float)
    return base + np.array([0.0, 0.0, config.sensor_height_offset])


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _angular_window(lo, hi, origin):
    """Conservative (az_lo, az_hi, el_lo, el_hi) covering every direction
    from ``origin`` that can meet the box; az bounds None means all."""
    ox, oy, oz = origin
    cx = np.array([lo[0], hi[0], hi[0], lo[0]]) - ox
    cy = np.array([lo[1], lo[1], hi[1], hi[1]]) - oy
    inside_xy = lo[0] <= ox <= hi[0] and lo[1] <= oy <= hi[1]
    dx = max(lo[0] - ox, 0.0, ox - hi[0])
    dy = max(lo[1] - oy, 0.0, oy - hi[1])
    dmin = float(np.hypot(dx, dy))
    dmax = float(np.max(np.hypot(cx, cy)))
    top, bottom = hi[2] - oz, lo[2] - oz
    el_hi = np.arctan2(top, dmin if top > 0 else dmax)
    el_lo = np.arctan2(bottom, dmin if bottom < 0 else dmax)
    if inside_xy:
        return None, None, el_lo, el_hi
    az = np.arctan2(cy, cx)
    ref = np.arctan2(cy.mean(), cx.mean())
    rel = _wrap(az - ref)
    return ref + rel.min(), ref + rel.max(), el_lo, el_hi


def cast_scan_rays(scene: Scene, config: LidarConfig):
    """Noise-free ray casting over the full azimuth x elevation grid.

    Returns (origin, dirs (n_az, n_el, 3), distances (n_az, n_el)); misses
    carry distance inf. The ego cuboid never produces returns.
    """
    origin = sensor_origin(scene, config)
    n_az = config.n_azimuth
    step = np.deg2rad(config.azimuth_resolution)
    az0 = scene.ego_heading
    az = az0 + step * np.arange(n_az)
    el = np.deg2rad(np.asarray(config.elevation_angles, dtype=float))
    ce = np.cos(el)
    dirs = np.stack([np.cos(az)[:, None] * ce[None, :],
                     np.sin(az)[:, None] * ce[None, :],
                     np.broadcast_to(np.sin(el)[None, :], (n_az, len(el)))], axis=-1)
    best = np.full((n_az, len(el)), np.inf)
    lo_all, hi_all, _, _ = scene.boxes(include_ego=False)
    margin = 2e-6
    for lo, hi in zip(lo_all, hi_all):
        near = np.array([min(max(origin[i], lo[i]), hi[i]) for i in range(3)])
        if np.linalg.norm(near - origin) > config.max_range:
            continue
        az_lo, az_hi, el_lo, el_hi = _angular_window(lo, hi, origin)
        ei = np.nonzero((el >= el_lo - margin) & (el <= el_hi + margin))[0]
        if len(ei) == 0:
            continue
        if az_lo is None:
            ai = np.arange(n_az)
        else:
            i0 = int(np.floor((az_lo - az0) / step)) - 1
            i1 = int(np.ceil((az_hi - az0) / step)) + 1
            if i1 - i0 + 1 >= n_az:
                ai = np.arange(n_az)
            else:
                ai = np.arange(i0, i1 + 1) % n_az
        d = dirs[ai[:, None], ei[None, :]]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (lo - origin) * inv
            t2 = (hi - origin) * inv
        tn = np.minimum(t1, t2)
        tf = np.maximum(t1, t2)
        par = d == 0.0
        if par.any():
            inside = (origin >= lo) & (origin <= hi)
            tn = np.where(par, np.where(inside, -np.inf, np.inf), tn)
            tf = np.where(par, np.where(inside, np.inf, -np.inf), tf)
        tmin = tn.max(axis=-1)
        tmax = tf.min(axis=-1)
        ok = (tmin <= tmax) & (tmin >= 0.0) & (tmin <= config.max_range)
        sub = best[ai[:, None], ei[None, :]]
        best[ai[:, None], ei[None, :]] = np.where(ok & (tmin < sub), tmin, sub)
    return origin, dirs, best


def scan(scene: Scene, config: LidarConfig, seed: int) -> PointCloud:
    """One instantaneous 360 degree sweep.

    Each hit is perturbed by i.i.d. N(0, sigma_L^2 / 3) noise per coordinate;
    points are ordered azimuth-major, then by elevation channel.
    """
    origin, dirs, dist = cast_scan_rays(scene, config)
    hit = np.isfinite(dist)
    pts = origin + dist[hit][:, None] * dirs[hit]
    if config.sigma_L > 0 and len(pts):
        rng = np.random.default_rng(seed)
        pts = pts + rng.normal(0.0, config.sigma_L / np.sqrt(3.0), size=pts.shape)
    return PointCloud(pts)

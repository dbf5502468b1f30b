"""Randomized urban-canyon scenes and the geometric queries shared by the
LIDAR simulator and the image-method ray tracer.

Coordinates: x runs along the street, y across it, z up; the road surface
is the plane z = 0. All obstacles are axis-aligned cuboids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

_EPS = 1e-12


class Kind(str, Enum):
    BUILDING = "building"
    VEHICLE = "vehicle"
    GROUND = "ground"


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class Cuboid:
    min_corner: tuple
    max_corner: tuple
    kind: Kind = Kind.BUILDING

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("cuboid corners must be 3-vectors")
        object.__setattr__(self, "min_corner", tuple(float(v) for v in lo))
        object.__setattr__(self, "max_corner", tuple(float(v) for v in hi))
        object.__setattr__(self, "kind", Kind(self.kind))
        n_strict = 2 if self.kind is Kind.GROUND else 3
        if np.any(lo[:n_strict] >= hi[:n_strict]):
            raise ValueError(f"degenerate cuboid {lo} .. {hi}")
        if self.kind is Kind.GROUND:
            if abs(hi[2] - lo[2]) > 1e-9:
                raise ValueError("ground cuboid must have zero z-extent")
        elif lo[2] >= hi[2]:
            raise ValueError(f"degenerate cuboid {lo} .. {hi}")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.min_corner) + np.asarray(self.max_corner))


@dataclass(frozen=True)
class Hit:
    distance: float
    point: np.ndarray
    face_normal: np.ndarray
    index: int = -1


@dataclass(frozen=True)
class SizeClass:
    name: str
    length: float
    width: float
    height: float
    weight: float


@dataclass(frozen=True)
class Lane:
    center_y: float
    heading: float  # radians; 0 drives toward +x, pi toward -x


DEFAULT_SIZE_CLASSES = (
    SizeClass("car", 4.5, 1.8, 1.5, 0.45),
    SizeClass("suv", 5.0, 2.0, 1.9, 0.20),
    SizeClass("truck", 9.0, 2.5, 3.5, 0.20),
    SizeClass("bus", 12.0, 2.6, 3.3, 0.15),
)

DEFAULT_LANES = (
    Lane(8.0, 0.0),
    Lane(11.5, 0.0),
    Lane(18.5, np.pi),
    Lane(22.0, np.pi),
)


@dataclass(frozen=True)
class SceneConfig:
    """Parameters of the synthetic street canyon.

    None of the defaults come from measurements of a real site; they are
    sized so that blockage by large vehicles produces a usable LOS/NLOS mix.
    """

    canyon_length_m: float = 160.0
    canyon_width_m: float = 30.0
    building_height_range_m: tuple = (10.0, 60.0)
    building_length_range_m: tuple = (12.0, 40.0)
    building_gap_range_m: tuple = (0.0, 8.0)
    building_depth_m: float = 20.0
    lanes: tuple = DEFAULT_LANES
    slot_length_m: float = 13.0
    vehicle_count_range: tuple = (15, 40)
    size_classes: tuple = DEFAULT_SIZE_CLASSES
    bs_position: tuple = (80.0, 2.0, 4.0)
    antenna_offset_m: float = 0.1  # receive antenna height above the ego roof
    ego_classes: tuple = ("car", "suv")  # size classes eligible for the ego vehicle
    max_retries: int = 50

    @property
    def slots_per_lane(self) -> int:
        return int(self.canyon_length_m // self.slot_length_m)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        if "lanes" in d:
            d["lanes"] = tuple(
                Lane(**lane) if isinstance(lane, dict) else Lane(*lane) for lane in d["lanes"]
            )
        if "size_classes" in d:
            d["size_classes"] = tuple(
                SizeClass(**s) if isinstance(s, dict) else SizeClass(*s) for s in d["size_classes"]
            )
        for key in ("building_height_range_m", "building_length_range_m", "ego_classes",
                    "building_gap_range_m", "vehicle_count_range", "bs_position"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "canyon_length_m": self.canyon_length_m,
            "canyon_width_m": self.canyon_width_m,
            "building_height_range_m": list(self.building_height_range_m),
            "building_length_range_m": list(self.building_length_range_m),
            "building_gap_range_m": list(self.building_gap_range_m),
            "building_depth_m": self.building_depth_m,
            "lanes": [{"center_y": float(l.center_y), "heading": float(l.heading)} for l in self.lanes],
            "slot_length_m": self.slot_length_m,
            "vehicle_count_range": list(self.vehicle_count_range),
            "size_classes": [vars(s).copy() for s in self.size_classes],
            "bs_position": list(self.bs_position),
            "antenna_offset_m": self.antenna_offset_m,
            "ego_classes": list(self.ego_classes),
            "max_retries": self.max_retries,
        }


@dataclass(frozen=True)
class Scene:
    obstacles: tuple
    bs_position: np.ndarray
    ego_position: np.ndarray
    ego_heading: float
    rng_seed: int
    ego_cuboid: Optional[Cuboid] = None
    ego_class: str = ""
    _boxes: dict = field(default_factory=dict, repr=False, compare=False)

    def boxes(self, include_ego: bool = True, include_ground: bool = True):
        """Stacked (lo, hi, kinds) arrays for vectorized queries, cached."""
        key = (include_ego, include_ground)
        if key not in self._boxes:
            cubs = [c for c in self.obstacles if include_ground or c.kind is not Kind.GROUND]
            if include_ego and self.ego_cuboid is not None:
                cubs.append(self.ego_cuboid)
            lo = np.array([c.min_corner for c in cubs], dtype=float).reshape(-1, 3)
            hi = np.array([c.max_corner for c in cubs], dtype=float).reshape(-1, 3)
            kinds = [c.kind for c in cubs]
            self._boxes[key] = (lo, hi, kinds, cubs)
        return self._boxes[key]

    @property
    def lidar_origin_base(self) -> np.ndarray:
        """Top-center of the ego roof."""
        c = self.ego_cuboid
        return np.array([(c.min_corner[0] + c.max_corner[0]) / 2,
                         (c.min_corner[1] + c.max_corner[1]) / 2,
                         c.max_corner[2]])

    @property
    def vehicles(self):
        return [c for c in self.obstacles if c.kind is Kind.VEHICLE]

    def with_obstacles(self, obstacles: Sequence[Cuboid]) -> "Scene":
        return Scene(tuple(obstacles), self.bs_position, self.ego_position,
                     self.ego_heading, self.rng_seed, self.ego_cuboid, self.ego_class)


def make_scene(obstacles=(), bs_position=(0.0, 0.0, 4.0), ego_position=(10.0, 0.0, 1.6),
               ego_cuboid=None, ego_heading=0.0, seed=0) -> Scene:
    """Hand-built scene, mostly for tests and small experiments."""
    return Scene(tuple(obstacles), np.asarray(bs_position, dtype=float),
                 np.asarray(ego_position, dtype=float), float(ego_heading), int(seed),
                 ego_cuboid)


def ground_cuboid(config: SceneConfig) -> Cuboid:
    pad = 200.0
    return Cuboid((-pad, -pad, 0.0), (config.canyon_length_m + pad, config.canyon_width_m + pad, 0.0),
                  Kind.GROUND)


def _buildings(config: SceneConfig, rng: np.random.Generator) -> list:
    out = []
    L, W, depth = config.canyon_length_m, config.canyon_width_m, config.building_depth_m
    for y0, y1 in ((-depth, 0.0), (W, W + depth)):
        x = -rng.uniform(0.0, config.building_length_range_m[0])
        while x < L:
            length = rng.uniform(*config.building_length_range_m)
            height = rng.uniform(*config.building_height_range_m)
            out.append(Cuboid((x, y0, 0.0), (x + length, y1, height), Kind.BUILDING))
            x += length + rng.uniform(*config.building_gap_range_m)
    return out


def _vehicle_box(lane: Lane, x_center: float, size: SizeClass) -> Cuboid:
    along_x = abs(np.cos(lane.heading)) >= abs(np.sin(lane.heading))
    dx, dy = (size.length, size.width) if along_x else (size.width, size.length)
    return Cuboid((x_center - dx / 2, lane.center_y - dy / 2, 0.0),
                  (x_center + dx / 2, lane.center_y + dy / 2, size.height), Kind.VEHICLE)


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Random canyon: building rows on both sides, slot-based vehicle placement.

    The ego vehicle always occupies one slot in addition to the
    ``vehicle_count_range`` other vehicles. Raises PlacementError when the
    lanes cannot hold the requested traffic.
    """
    rng = np.random.default_rng(seed)
    buildings = _buildings(config, rng)

    n_lanes, n_slots = len(config.lanes), config.slots_per_lane
    lo_n, hi_n = config.vehicle_count_range
    n_vehicles = int(rng.integers(lo_n, hi_n + 1))
    weights = np.array([s.weight for s in config.size_classes], dtype=float)
    weights /= weights.sum()
    ego_weights = np.where([s.name in config.ego_classes for s in config.size_classes], weights, 0.0)
    if ego_weights.sum() <= 0:
        raise ValueError("no size class is eligible for the ego vehicle")
    ego_weights /= ego_weights.sum()

    free = [list(range(n_slots)) for _ in range(n_lanes)]
    placed = []  # (lane index, slot, size class)
    for v in range(n_vehicles + 1):
        for attempt in range(config.max_retries):
            lane_idx = int(rng.integers(n_lanes))
            if free[lane_idx]:
                break
        else:
            congested = [i for i, f in enumerate(free) if not f]
            raise PlacementError(
                f"placement failure: lane {lane_idx} congested after {config.max_retries} retries "
                f"(full lanes {congested}, vehicle {v} of {n_vehicles + 1})")
        slot = free[lane_idx].pop(int(rng.integers(len(free[lane_idx]))))
        w = ego_weights if v == 0 else weights
        size = config.size_classes[int(rng.choice(len(w), p=w))]
        placed.append((lane_idx, slot, size))

    cuboids = []
    for lane_idx, slot, size in placed:
        slack = max(config.slot_length_m - size.length, 0.0)
        x_center = slot * config.slot_length_m + size.length / 2 + rng.uniform(0.0, slack)
        cuboids.append(_vehicle_box(config.lanes[lane_idx], x_center, size))

    ego_box, others = cuboids[0], cuboids[1:]
    ego_lane = config.lanes[placed[0][0]]
    ego_pos = np.array([(ego_box.min_corner[0] + ego_box.max_corner[0]) / 2,
                        (ego_box.min_corner[1] + ego_box.max_corner[1]) / 2,
                        ego_box.max_corner[2] + config.antenna_offset_m])
    obstacles = tuple(buildings) + tuple(others) + (ground_cuboid(config),)
    return Scene(obstacles, np.asarray(config.bs_position, dtype=float), ego_pos,
                 float(ego_lane.heading), int(seed), ego_box, placed[0][2].name)


# ---------------------------------------------------------------------------
# ray queries


def _slab(origins, dirs, lo, hi):
    """Entry/exit parameters of rays (R,3) against boxes (C,3) -> (R,C) each.

    Rays parallel to a slab get (-inf, inf) when strictly inside it and an
    empty interval otherwise.
    """
    o = origins[:, None, :]
    d = dirs[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo[None] - o) * inv
        t2 = (hi[None] - o) * inv
    tnear = np.minimum(t1, t2)
    tfar = np.maximum(t1, t2)
    parallel = d == 0.0
    if np.any(parallel):
        inside = (o > lo[None]) & (o < hi[None])
        par = np.broadcast_to(parallel, tnear.shape)
        tnear = np.where(par, np.where(inside, -np.inf, np.inf), tnear)
        tfar = np.where(par, np.where(inside, np.inf, -np.inf), tfar)
    return tnear, tfar


def _closed_slab(origins, dirs, lo, hi):
    """Like _slab but a parallel ray lying on a face still counts as inside,
    so zero-thickness boxes (the ground) are hit from above."""
    o = origins[:, None, :]
    d = dirs[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo[None] - o) * inv
        t2 = (hi[None] - o) * inv
    tnear = np.minimum(t1, t2)
    tfar = np.maximum(t1, t2)
    parallel = d == 0.0
    if np.any(parallel):
        inside = (o >= lo[None]) & (o <= hi[None])
        par = np.broadcast_to(parallel, tnear.shape)
        tnear = np.where(par, np.where(inside, -np.inf, np.inf), tnear)
        tfar = np.where(par, np.where(inside, np.inf, -np.inf), tfar)
    return tnear, tfar


def ray_cast_many(lo, hi, origins, dirs, max_range):
    """Nearest hit for many rays against the boxes (lo, hi).

    Returns (distance, box index, entry axis) per ray; distance is inf and
    index -1 for misses. A ray starting inside a box reports no hit on it.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    R = dirs.shape[0]
    if origins.shape[0] == 1 and R > 1:
        origins = np.broadcast_to(origins, dirs.shape)
    best = np.full(R, np.inf)
    idx = np.full(R, -1, dtype=np.int64)
    axis = np.zeros(R, dtype=np.int64)
    if len(lo) == 0 or R == 0:
        return best, idx, axis
    o = origins
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv = 1.0 / dirs
        for c in range(len(lo)):
            t1 = (lo[c] - o) * inv
            t2 = (hi[c] - o) * inv
            tn = np.minimum(t1, t2)
            tf = np.maximum(t1, t2)
            par = dirs == 0.0
            if par.any():
                inside = (o >= lo[c]) & (o <= hi[c])
                tn = np.where(par, np.where(inside, -np.inf, np.inf), tn)
                tf = np.where(par, np.where(inside, np.inf, -np.inf), tf)
            tn = np.nan_to_num(tn, nan=np.inf)
            tf = np.nan_to_num(tf, nan=-np.inf)
            ax = np.argmax(tn, axis=1)
            tmin = tn[np.arange(R), ax]
            tmax = tf.min(axis=1)
            ok = (tmin <= tmax) & (tmin >= 0.0) & (tmin <= max_range) & (tmin < best)
            best = np.where(ok, tmin, best)
            idx = np.where(ok, c, idx)
            axis = np.where(ok, ax, axis)
    return best, idx, axis


def _check_unit(direction):
    n = np.linalg.norm(direction)
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"ray direction must be unit norm, got |d| = {n!r}")


def ray_cast(scene: Scene, origin, direction, max_range: float, exclude_ego: bool = False) -> Optional[Hit]:
    """Nearest intersection of a ray with the scene within max_range, or None."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    _check_unit(direction)
    lo, hi, _, _ = scene.boxes(include_ego=not exclude_ego)
    dist, idx, ax = ray_cast_many(lo, hi, origin[None], direction[None], max_range)
    if idx[0] < 0:
        return None
    normal = np.zeros(3)
    normal[ax[0]] = -np.sign(direction[ax[0]])
    return Hit(float(dist[0]), origin + dist[0] * direction, normal, int(idx[0]))


def segments_blocked(lo, hi, a, b) -> np.ndarray:
    """For segments a[i] -> b[i], whether the open segment passes through the
    interior of any box. Touching a face or edge does not block."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if len(lo) == 0:
        return np.zeros(len(a), dtype=bool)
    d = b - a
    tnear, tfar = _slab(a, d, lo, hi)
    tnear = np.nan_to_num(tnear, nan=np.inf).max(axis=2)
    tfar = np.nan_to_num(tfar, nan=-np.inf).min(axis=2)
    enter = np.maximum(tnear, 0.0)
    leave = np.minimum(tfar, 1.0)
    # relative slack keeps floating noise at a shared endpoint from counting
    with np.errstate(over="ignore", invalid="ignore"):
        return np.any(leave - enter > 1e-9, axis=1)


def is_los(scene: Scene, a, b, exclude_ego: Optional[bool] = None) -> bool:
    """True iff the open segment a-b crosses no building or vehicle interior.

    The ego cuboid is ignored when either endpoint is the ego antenna
    (or when ``exclude_ego`` is forced).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if exclude_ego is None:
        exclude_ego = bool(np.allclose(a, scene.ego_position) or np.allclose(b, scene.ego_position))
    lo, hi, _, _ = scene.boxes(include_ego=not exclude_ego, include_ground=False)
    return not bool(segments_blocked(lo, hi, a[None], b[None])[0])

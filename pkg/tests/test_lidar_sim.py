import numpy as np
import pytest

from lidarbeam.lidar_sim import LidarConfig, PointCloud, cast_scan_rays, scan, sensor_origin
from lidarbeam.scene import Cuboid, Kind, SceneConfig, generate_scene, make_scene, ray_cast_many

WALL = Cuboid((5.0, -1000.0, -1000.0), (6.0, 1000.0, 1000.0))


def _at_origin(obstacles):
    # no ego cuboid: the sensor sits at ego_position + offset
    return make_scene(obstacles, ego_position=(0.0, 0.0, -1.0))


def test_default_config():
    cfg = LidarConfig()
    assert cfg.azimuth_resolution == 0.1728
    assert len(cfg.elevation_angles) == 64
    assert cfg.elevation_angles[0] == pytest.approx(-24.8)
    assert cfg.elevation_angles[-1] == pytest.approx(2.0)
    assert cfg.sensor_height_offset == 1.0
    assert cfg.sigma_L == 0.1
    assert cfg.n_azimuth == 2083


def test_config_validation():
    with pytest.raises(ValueError):
        LidarConfig(azimuth_resolution=0)
    with pytest.raises(ValueError):
        LidarConfig(sigma_L=-0.1)


def test_empty_scene_gives_no_points():
    assert len(scan(_at_origin([]), LidarConfig(), 0)) == 0


def test_noiseless_wall_points_lie_on_plane():
    scene = _at_origin([WALL])
    np.testing.assert_allclose(sensor_origin(scene, LidarConfig()), 0.0)
    pc = scan(scene, LidarConfig(sigma_L=0.0), 0)
    assert len(pc) > 0
    assert np.max(np.abs(pc.points[:, 0] - 5.0)) < 1e-9


def test_noise_variance_matches_configuration():
    cfg = LidarConfig(sigma_L=0.1, elevation_angles=np.linspace(-40, 40, 100))
    scene = _at_origin([WALL])
    origin, dirs, dist = cast_scan_rays(scene, cfg)
    hit = np.isfinite(dist)
    clean = origin + dist[hit][:, None] * dirs[hit]
    noisy = scan(scene, cfg, 123).points
    assert len(noisy) >= 100_000
    var = (noisy - clean).var(axis=0)
    target = 0.01 / 3
    assert np.all((0.9 * target <= var) & (var <= 1.1 * target))


def test_scan_reproducible():
    scene = generate_scene(SceneConfig(), 3)
    a, b = scan(scene, LidarConfig(), 9), scan(scene, LidarConfig(), 9)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.tobytes() != scan(scene, LidarConfig(), 10).points.tobytes()


def test_occlusion_monotonic():
    far = Cuboid((10.0, -3.0, -2.0), (11.0, 3.0, 2.0))
    near = Cuboid((4.0, -1.0, -1.0), (4.5, 1.0, 1.0))
    cfg = LidarConfig(sigma_L=0.0)
    only_far = scan(_at_origin([far]), cfg, 0).points
    both = scan(_at_origin([far, near]), cfg, 0).points
    on_far = lambda p: np.sum(np.abs(p[:, 0] - 10.0) < 1e-9)
    assert on_far(both) < on_far(only_far)
    assert len(both) >= len(only_far)  # the near box adds its own returns


def test_points_on_faces_and_in_range():
    scene = generate_scene(SceneConfig(), 5)
    cfg = LidarConfig(sigma_L=0.0)
    pts = scan(scene, cfg, 0).points
    origin = sensor_origin(scene, cfg)
    assert np.all(np.linalg.norm(pts - origin, axis=1) <= cfg.max_range + 1e-9)
    lo, hi, _, _ = scene.boxes(include_ego=False)
    sample = pts[:: max(len(pts) // 500, 1)]
    for p in sample:
        # distance from p to the closest box surface
        inside = np.all((p >= lo - 1e-9) & (p <= hi + 1e-9), axis=1)
        face_gap = np.minimum(np.abs(p - lo), np.abs(p - hi)).min(axis=1)
        assert np.any(inside & (face_gap < 1e-9))


def test_scan_matches_brute_force_cast():
    scene = generate_scene(SceneConfig(), 11)
    cfg = LidarConfig(azimuth_resolution=3.0, sigma_L=0.0)
    origin, dirs, dist = cast_scan_rays(scene, cfg)
    lo, hi, _, _ = scene.boxes(include_ego=False)
    ref, _, _ = ray_cast_many(lo, hi, origin[None], dirs.reshape(-1, 3), cfg.max_range)
    np.testing.assert_array_equal(np.isfinite(ref), np.isfinite(dist.ravel()))
    ok = np.isfinite(ref)
    np.testing.assert_allclose(dist.ravel()[ok], ref[ok], rtol=0, atol=1e-9)


def test_ego_body_produces_no_returns():
    ego = Cuboid((-2.0, -1.0, 0.0), (2.0, 1.0, 1.5), Kind.VEHICLE)
    scene = make_scene([], ego_position=(0.0, 0.0, 1.6), ego_cuboid=ego)
    # the sensor is above the roof: steep downward rays would hit the body
    cfg = LidarConfig(elevation_angles=[-80.0, -60.0], sigma_L=0.0)
    assert len(scan(scene, cfg, 0)) == 0


def test_xyz_round_trip(tmp_path):
    pc = PointCloud(np.array([[1.0, 2.0, 3.0], [-0.1234567, 0.5, 9.0]]))
    path = tmp_path / "cloud.xyz"
    pc.to_xyz(path)
    assert path.read_text().splitlines()[0] == "1.000000 2.000000 3.000000"
    np.testing.assert_allclose(PointCloud.from_xyz(path).points, pc.points, atol=5e-7)

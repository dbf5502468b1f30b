import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarbeam.features import (CoverageZone, FeatureConfig, HistogramGrid, apply_gnss_noise,
                                encode_input, quantize, voxelize)

ZONE = CoverageZone(0.0, 0.0, 64.0, 64.0, 8.0)
EGO = np.array([32.0, 32.0, 1.5])
CFG = FeatureConfig()


def test_defaults_and_validation():
    assert CFG.shape == (64, 64, 8)
    assert (CFG.d_max, CFG.ground_z_min) == (25.0, 0.1)
    with pytest.raises(ValueError):
        FeatureConfig(b_x=0)
    with pytest.raises(ValueError):
        FeatureConfig(d_max=0)
    with pytest.raises(ValueError):
        CoverageZone(1, 0, 1, 5, 2)
    with pytest.raises(ValueError):
        CoverageZone(0, 0, 1, 5, 0)


def test_gnss_noise_zero_is_identity():
    p = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(apply_gnss_noise(p, 0.0, 1), p)
    with pytest.raises(ValueError):
        apply_gnss_noise(p, -1.0, 1)


def test_gnss_noise_variance():
    rng = np.random.default_rng(0)
    eps = np.array([apply_gnss_noise(np.zeros(3), 3.0, s) for s in rng.integers(0, 2 ** 63, 100_000)])
    var = eps.var(axis=0)
    assert np.all((0.9 * 3 <= var) & (var <= 1.1 * 3))
    assert abs(np.mean(np.sum(eps ** 2, axis=1)) - 9.0) < 0.2
    assert np.all(np.abs(eps.mean(axis=0)) < 0.03)
    np.testing.assert_array_equal(apply_gnss_noise(np.zeros(3), 3.0, 7), apply_gnss_noise(np.zeros(3), 3.0, 7))


def test_empty_cloud():
    g = voxelize(np.zeros((0, 3)), ZONE, EGO, CFG)
    assert g.counts.shape == (64, 64, 8) and not g.counts.any()


def test_min_corner_goes_to_first_bin():
    near = FeatureConfig(ground_z_min=0.0, d_max=1e3)
    g = voxelize(np.array([[0.0, 0.0, 0.0]]), ZONE, EGO, near)
    assert g.counts[0, 0, 0] == 1 and g.counts.sum() == 1


def test_upper_edge_is_clamped():
    near = FeatureConfig(d_max=1e3)
    g = voxelize(np.array([[64.0, 64.0, 8.0]]), ZONE, EGO, near)
    assert g.counts[63, 63, 7] == 1


def test_filters():
    pts = np.array([[33.0, 32.0, 0.05],   # ground return
                    [62.0, 32.0, 2.0],    # 30 m from ego
                    [32.0, 32.0, 9.0],    # above the zone
                    [33.0, 32.0, 0.1],    # kept: exactly at the ground threshold
                    [57.0, 32.0, 1.5]])   # kept: exactly d_max away
    g = voxelize(pts, ZONE, EGO, CFG)
    assert g.counts.sum() == 2
    assert g.counts[33, 32, 0] == 1 and g.counts[57, 32, 1] == 1


def test_quantizer_index_formula():
    lo, hi = np.array([0.0, -1.0, 0.0]), np.array([160.0, 31.0, 6.0])
    pts = np.array([[80.0, 15.0, 3.0], [2.5, -1.0, 0.7499], [159.99, 30.99, 5.99]])
    np.testing.assert_array_equal(quantize(pts, lo, hi, np.array([6, 6, 3])),
                                  [[32, 32, 4], [1, 0, 0], [63, 63, 7]])


def test_bs_bin_in_bounds():
    g = voxelize(np.zeros((0, 3)), ZONE, EGO, CFG, bs_position=(70.0, -5.0, 4.0))
    assert g.bs_bin == (63, 0, 4)
    assert voxelize(np.zeros((0, 3)), ZONE, EGO, CFG, bs_position=(1.0, 1.0, 1.0)).bs_bin == (1, 1, 1)


def test_sparse_round_trip():
    rng = np.random.default_rng(1)
    pts = EGO + rng.uniform(-10, 10, size=(500, 3))
    g = voxelize(pts, ZONE, EGO, CFG, bs_position=(10.0, 60.0, 4.0))
    back = HistogramGrid.from_sparse(g.to_sparse(), CFG.shape, g.bs_bin)
    assert np.array_equal(back.counts, g.counts) and back.bs_bin == g.bs_bin


clouds = st.lists(st.tuples(st.floats(10, 54), st.floats(10, 54), st.floats(-1, 9)),
                  min_size=0, max_size=60)


@settings(max_examples=50, deadline=None)
@given(clouds, st.randoms(use_true_random=False))
def test_permutation_invariance_and_count_bound(raw, rnd):
    pts = np.array(raw, dtype=float).reshape(-1, 3)
    g = voxelize(pts, ZONE, EGO, CFG)
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    assert np.array_equal(voxelize(pts[perm], ZONE, EGO, CFG).counts, g.counts)
    assert g.counts.sum() <= len(pts)
    assert g.counts.shape == CFG.shape


@settings(max_examples=50, deadline=None)
@given(clouds, st.tuples(st.floats(-15, 15), st.floats(-15, 15), st.floats(0.1, 6.0)))
def test_adding_valid_point_increments_one_bin(raw, off):
    pts = np.array(raw, dtype=float).reshape(-1, 3)
    p = np.array([EGO[0] + off[0], EGO[1] + off[1], off[2]])
    if np.linalg.norm(p - EGO) > CFG.d_max:
        return
    before = voxelize(pts, ZONE, EGO, CFG).counts
    after = voxelize(np.vstack([pts, p]), ZONE, EGO, CFG).counts
    diff = after - before
    assert diff.sum() == 1 and diff.max() == 1 and diff.min() == 0


def test_encode_examples():
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    assert not encode_input(counts).any()
    counts[0, 0, 0], counts[1, 0, 1], counts[0, 1, 1] = 255, 15, 10_000
    x = encode_input(HistogramGrid(counts, (0, 0, 0)))
    assert x.dtype == np.float32 and x.shape == (2, 2, 2)
    assert x[0, 0, 0] == 1.0
    assert x[1, 0, 1] == pytest.approx(0.5, abs=1e-7)
    assert x[0, 1, 1] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 100_000))
def test_encode_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    xa, xb = encode_input(np.array([lo])), encode_input(np.array([hi]))
    assert 0 <= xa[0] <= xb[0] <= 1

import itertools

import numpy as np
import pytest
from scipy.constants import c as C
from scipy.optimize import minimize_scalar

from lidarbeam.raytrace import (LinkState, Mpc, MpcList, TraceConfig, link_state, trace_link,
                                trace_mpcs, trace_paths)
from lidarbeam.scene import Cuboid, Kind, SceneConfig, generate_scene, make_scene, segments_blocked

GROUND = Cuboid((-200.0, -200.0, 0.0), (200.0, 200.0, 0.0), Kind.GROUND)


def test_free_space_single_path():
    mpcs = trace_mpcs(make_scene([]), (0, 0, 0), (100, 0, 0), max_order=2, random_phase=False)
    assert len(mpcs) == 1
    m = mpcs.mpcs[0]
    assert m.is_los and m.order == 0
    assert m.tau == pytest.approx(100 / C, rel=1e-12)
    assert m.tau == pytest.approx(333.56e-9, abs=0.005e-9)
    assert abs(m.alpha) == pytest.approx(C / (4 * np.pi * 60e9 * 100), rel=1e-12)
    # 3.9789e-6 is the same formula with c rounded to 3e8
    assert abs(m.alpha) == pytest.approx(3.9789e-6, rel=1e-3)
    assert (m.phi_D, m.theta_D) == pytest.approx((0.0, 0.0))
    assert (abs(m.phi_A), m.theta_A) == pytest.approx((np.pi, 0.0))


def _fermat_ground_length(tx, rx):
    """Shortest tx -> ground -> rx length by direct minimization over the
    reflection point on the line below the link (the optimum lies in the
    vertical plane through tx and rx)."""
    tx, rx = np.asarray(tx, float), np.asarray(rx, float)
    u = (rx - tx)[:2]

    def length(s):
        p = np.array([tx[0] + s * u[0], tx[1] + s * u[1], 0.0])
        return np.linalg.norm(p - tx) + np.linalg.norm(rx - p)

    res = minimize_scalar(length, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
    return res.fun


def test_ground_bounce_length():
    tx, rx = (0.0, 0.0, 4.0), (10.0, 0.0, 1.5)
    mpcs = trace_mpcs(make_scene([GROUND]), tx, rx, max_order=1, random_phase=False)
    assert len(mpcs) == 2
    bounce = [m for m in mpcs.mpcs if m.order == 1][0]
    length = bounce.tau * C
    assert length == pytest.approx(np.sqrt(10 ** 2 + 5.5 ** 2), abs=1e-6)
    assert length == pytest.approx(11.4127, abs=1e-4)
    assert length == pytest.approx(_fermat_ground_length(tx, rx), abs=1e-6)
    assert abs(bounce.alpha) == pytest.approx(0.5 * C / (4 * np.pi * 60e9 * length), rel=1e-12)


def test_blocked_los_order_zero_is_empty():
    slab = Cuboid((4.0, -10.0, -10.0), (5.0, 10.0, 10.0))
    mpcs = trace_mpcs(make_scene([slab]), (0, 0, 0), (10, 0, 0), max_order=0)
    assert len(mpcs) == 0
    assert link_state(mpcs) is LinkState.OUTAGE


def _mpc(order):
    return Mpc(1e-6 + 0j, 1e-7, 0, 0, 0, 0, order, order == 0)


def test_link_state():
    assert link_state(MpcList((_mpc(0), _mpc(1)))) is LinkState.LOS
    assert link_state(MpcList((_mpc(1), _mpc(2)))) is LinkState.NLOS
    assert link_state(MpcList(())) is LinkState.OUTAGE


def _scenes():
    return [generate_scene(SceneConfig(), s) for s in range(6)]


def test_reciprocity():
    for scene in _scenes():
        a = trace_mpcs(scene, scene.bs_position, scene.ego_position, cap=1000, random_phase=False)
        b = trace_mpcs(scene, scene.ego_position, scene.bs_position, cap=1000, random_phase=False)
        ka = sorted((round(m.tau * 1e18), round(abs(m.alpha) * 1e18)) for m in a.mpcs)
        kb = sorted((round(m.tau * 1e18), round(abs(m.alpha) * 1e18)) for m in b.mpcs)
        assert len(ka) == len(kb)
        np.testing.assert_allclose(np.array(ka, float), np.array(kb, float), rtol=1e-9)
        # departure and arrival angles swap roles
        da = sorted((round(m.tau * 1e15), round(m.phi_D, 6), round(m.theta_D, 6)) for m in a.mpcs)
        db = sorted((round(m.tau * 1e15), round(m.phi_A, 6), round(m.theta_A, 6)) for m in b.mpcs)
        assert da == db


def test_paths_are_unobstructed_and_los_is_shortest():
    for scene in _scenes():
        lo, hi, _, _ = scene.boxes(include_ego=False, include_ground=False)
        tx, rx = scene.bs_position, scene.ego_position
        for verts, order in trace_paths(scene, tx, rx, 2):
            verts = np.asarray(verts)
            assert len(verts) == order + 2
            assert not segments_blocked(lo, hi, verts[:-1], verts[1:]).any()
        mpcs = trace_mpcs(scene, tx, rx, cap=1000)
        los = [m.tau for m in mpcs.mpcs if m.is_los]
        if los:
            assert all(los[0] <= m.tau for m in mpcs.mpcs)
        d = np.linalg.norm(tx - rx)
        assert all(m.tau >= d / C - 1e-15 for m in mpcs.mpcs)
        assert all((m.order == 0) == m.is_los for m in mpcs.mpcs)


def test_cap_keeps_strongest():
    scene = generate_scene(SceneConfig(), 2)
    full = trace_mpcs(scene, scene.bs_position, scene.ego_position, cap=1000, seed=1)
    capped = trace_mpcs(scene, scene.bs_position, scene.ego_position, cap=4, seed=1)
    assert len(capped) == min(4, len(full))
    mags = np.abs(full.alphas)
    assert np.all(np.diff(mags) <= 0)
    kept = np.sum(np.abs(capped.alphas) ** 2)
    small = mags[:10]
    for combo in itertools.combinations(range(len(small)), len(capped)):
        assert kept >= np.sum(small[list(combo)] ** 2) - 1e-30
    assert capped.to_array().tobytes() == MpcList(full.mpcs[:4]).to_array().tobytes()


def test_random_phase_seeded():
    scene = generate_scene(SceneConfig(), 4)
    cfg = TraceConfig()
    a, b = trace_link(scene, cfg, seed=5), trace_link(scene, cfg, seed=5)
    assert a.to_array().tobytes() == b.to_array().tobytes()
    c = trace_link(scene, cfg, seed=6)
    np.testing.assert_allclose(np.abs(a.alphas), np.abs(c.alphas))
    np.testing.assert_allclose(a.taus, c.taus)


def test_array_round_trip():
    scene = generate_scene(SceneConfig(), 1)
    mpcs = trace_link(scene, TraceConfig(), seed=0)
    arr = mpcs.to_array()
    assert arr.shape == (len(mpcs), 8)
    assert MpcList.from_array(arr) == mpcs


def test_reflection_coefficient():
    assert TraceConfig().gamma == pytest.approx(-0.5)
    wall = Cuboid((-50.0, 5.0, -50.0), (50.0, 6.0, 50.0))
    mpcs = trace_mpcs(make_scene([wall]), (0, 0, 0), (10, 0, 0), max_order=2, random_phase=False)
    orders = sorted(m.order for m in mpcs.mpcs)
    assert orders == [0, 1]
    refl = [m for m in mpcs.mpcs if m.order == 1][0]
    # image of tx across y = 5 is (0, 10, 0)
    d = np.hypot(10, 10)
    assert refl.tau * C == pytest.approx(d, abs=1e-9)
    expected = -0.5 * C / (4 * np.pi * 60e9 * d) * np.exp(-2j * np.pi * 60e9 * d / C)
    assert refl.alpha == pytest.approx(expected, rel=1e-9)

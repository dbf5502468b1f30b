"""Image-method ray tracing over cuboid scenes.

Produces the per-link multipath list (gain, delay, departure and arrival
angles). Specular reflections up to second order off cuboid faces and the
ground plane; no diffraction or diffuse scattering.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .scene import Kind, Scene, segments_blocked


class LinkState(str, Enum):
    LOS = "LOS"
    NLOS = "NLOS"
    OUTAGE = "outage"


@dataclass(frozen=True)
class Mpc:
    alpha: complex
    tau: float
    phi_D: float
    theta_D: float
    phi_A: float
    theta_A: float
    order: int
    is_los: bool

    def as_row(self):
        return (self.alpha.real, self.alpha.imag, self.tau, self.phi_D, self.theta_D,
                self.phi_A, self.theta_A, float(self.order))


@dataclass(frozen=True)
class MpcList:
    mpcs: tuple = ()

    def __len__(self):
        return len(self.mpcs)

    def __iter__(self):
        return iter(self.mpcs)

    def __getitem__(self, i):
        return self.mpcs[i]

    def to_array(self) -> np.ndarray:
        """(P, 8) rows: Re a, Im a, tau, phi_D, theta_D, phi_A, theta_A, order."""
        return np.array([m.as_row() for m in self.mpcs], dtype=float).reshape(-1, 8)

    @classmethod
    def from_array(cls, arr) -> "MpcList":
        arr = np.asarray(arr, dtype=float).reshape(-1, 8)
        return cls(tuple(
            Mpc(complex(r[0], r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5]),
                float(r[6]), int(r[7]), int(r[7]) == 0)
            for r in arr))

    # convenience views used by the channel code
    @property
    def alphas(self):
        return np.array([m.alpha for m in self.mpcs], dtype=complex)

    @property
    def taus(self):
        return np.array([m.tau for m in self.mpcs], dtype=float)


@dataclass(frozen=True)
class TraceConfig:
    max_order: int = 2
    carrier_freq: float = 60e9
    cap: int = 25
    reflection_magnitude: float = 0.5
    reflection_phase: float = np.pi
    random_phase: bool = True

    @property
    def gamma(self) -> complex:
        return self.reflection_magnitude * np.exp(1j * self.reflection_phase)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return dict(vars(self))


def link_state(mpcs: MpcList) -> LinkState:
    if len(mpcs) == 0:
        return LinkState.OUTAGE
    if any(m.is_los for m in mpcs):
        return LinkState.LOS
    return LinkState.NLOS


@dataclass
class _Faces:
    axis: np.ndarray    # (F,) plane normal axis
    coord: np.ndarray   # (F,) plane position along that axis
    sign: np.ndarray    # (F,) +1 / -1 outward direction
    lo: np.ndarray      # (F, 3) face rectangle bounds (closed)
    hi: np.ndarray
    owner: np.ndarray   # (F,) index of the cuboid the face belongs to


def _faces(scene: Scene) -> _Faces:
    axis, coord, sign, lo, hi, owner = [], [], [], [], [], []
    for ci, cub in enumerate(scene.obstacles):
        clo = np.asarray(cub.min_corner)
        chi = np.asarray(cub.max_corner)
        if cub.kind is Kind.GROUND:
            faces = [(2, chi[2], 1.0)]
        else:
            faces = [(a, v, s) for a in range(3) for v, s in ((clo[a], -1.0), (chi[a], 1.0))]
        for a, v, s in faces:
            axis.append(a)
            coord.append(v)
            sign.append(s)
            flo, fhi = clo.copy(), chi.copy()
            flo[a] = fhi[a] = v
            lo.append(flo)
            hi.append(fhi)
            owner.append(ci)
    return _Faces(np.array(axis, dtype=int), np.array(coord, dtype=float),
                  np.array(sign, dtype=float), np.array(lo, dtype=float).reshape(-1, 3),
                  np.array(hi, dtype=float).reshape(-1, 3), np.array(owner, dtype=int))


def _mirror(points, axis, coord):
    out = np.array(points, dtype=float, copy=True)
    idx = np.arange(len(out))
    out[idx, axis] = 2.0 * coord - out[idx, axis]
    return out


def _plane_hit(p, q, axis, coord):
    """Intersection parameter and point of segments p->q with axis planes."""
    idx = np.arange(len(p))
    pa = p[idx, axis]
    qa = q[idx, axis]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (coord - pa) / (qa - pa)
        pt = p + t[:, None] * (q - p)
    return t, pt


def _on_face(pt, faces: _Faces, fi, tol=1e-9):
    return np.all((pt >= faces.lo[fi] - tol) & (pt <= faces.hi[fi] + tol), axis=1)


def _angles(v):
    v = np.atleast_2d(v)
    n = np.linalg.norm(v, axis=1)
    return np.arctan2(v[:, 1], v[:, 0]), np.arcsin(np.clip(v[:, 2] / n, -1.0, 1.0))


def _occluders(scene: Scene, tx, rx):
    """Box arrays for occlusion tests; the ego cuboid is skipped when a
    terminal is the ego antenna."""
    at_ego = np.allclose(tx, scene.ego_position) or np.allclose(rx, scene.ego_position)
    lo, hi, _, _ = scene.boxes(include_ego=not at_ego, include_ground=False)
    return lo, hi


def trace_paths(scene: Scene, tx, rx, max_order: int):
    """Geometric path search. Returns a list of (vertices, order) where
    vertices is the polyline tx, reflection points..., rx."""
    if max_order not in (0, 1, 2):
        raise ValueError("max_order must be 0, 1 or 2")
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.allclose(tx, rx):
        raise ValueError("tx and rx coincide")
    lo, hi = _occluders(scene, tx, rx)
    paths = []
    if not segments_blocked(lo, hi, tx[None], rx[None])[0]:
        paths.append(([tx, rx], 0))
    if max_order == 0:
        return paths
    faces = _faces(scene)
    F = len(faces.axis)
    if F == 0:
        return paths
    tx_a = tx[faces.axis]
    rx_a = rx[faces.axis]
    front_tx = faces.sign * (tx_a - faces.coord) > 0
    front_rx = faces.sign * (rx_a - faces.coord) > 0

    # first order
    f1 = np.nonzero(front_tx & front_rx)[0]
    if len(f1):
        img = _mirror(np.repeat(tx[None], len(f1), 0), faces.axis[f1], faces.coord[f1])
        t, pt = _plane_hit(img, np.repeat(rx[None], len(f1), 0), faces.axis[f1], faces.coord[f1])
        ok = (t > 0) & (t < 1) & _on_face(pt, faces, f1)
        f1, pt = f1[ok], pt[ok]
        if len(f1):
            blocked = segments_blocked(lo, hi, np.repeat(tx[None], len(f1), 0), pt) | \
                segments_blocked(lo, hi, pt, np.repeat(rx[None], len(f1), 0))
            for k in np.nonzero(~blocked)[0]:
                paths.append(([tx, pt[k], rx], 1))
    if max_order == 1:
        return paths

    # second order: tx -> face a -> face b -> rx
    fa = np.nonzero(front_tx)[0]
    fb = np.nonzero(front_rx)[0]
    A, B = np.meshgrid(fa, fb, indexing="ij")
    A, B = A.ravel(), B.ravel()
    keep = faces.owner[A] != faces.owner[B]
    A, B = A[keep], B[keep]
    if len(A) == 0:
        return paths
    img1 = _mirror(np.repeat(tx[None], len(A), 0), faces.axis[A], faces.coord[A])
    # the first image must sit in front of the second face to be reflected by it
    ok = faces.sign[B] * (img1[np.arange(len(A)), faces.axis[B]] - faces.coord[B]) > 0
    A, B, img1 = A[ok], B[ok], img1[ok]
    img2 = _mirror(img1, faces.axis[B], faces.coord[B])
    rxs = np.repeat(rx[None], len(A), 0)
    t2, p2 = _plane_hit(img2, rxs, faces.axis[B], faces.coord[B])
    ok = (t2 > 0) & (t2 < 1) & _on_face(p2, faces, B)
    A, B, img1, p2 = A[ok], B[ok], img1[ok], p2[ok]
    t1, p1 = _plane_hit(img1, p2, faces.axis[A], faces.coord[A])
    ok = (t1 > 0) & (t1 < 1) & _on_face(p1, faces, A)
    # the reflected leg must leave face a on its front side and hit face b from the front
    ok &= faces.sign[A] * (p2[np.arange(len(A)), faces.axis[A]] - faces.coord[A]) > 0
    ok &= faces.sign[B] * (p1[np.arange(len(A)), faces.axis[B]] - faces.coord[B]) > 0
    A, B, p1, p2 = A[ok], B[ok], p1[ok], p2[ok]
    if len(A):
        txs = np.repeat(tx[None], len(A), 0)
        blocked = segments_blocked(lo, hi, txs, p1) | segments_blocked(lo, hi, p1, p2) | \
            segments_blocked(lo, hi, p2, rxs[: len(A)])
        for k in np.nonzero(~blocked)[0]:
            paths.append(([tx, p1[k], p2[k], rx], 2))
    return paths


def trace_mpcs(scene: Scene, tx, rx, max_order: int = 2, carrier_freq: float = 60e9,
               cap: int = 25, gamma: complex = -0.5, random_phase: bool = True,
               seed: Optional[int] = None) -> MpcList:
    """Multipath components of the tx -> rx link, strongest first.

    |alpha| follows the free-space Friis amplitude over the unfolded path
    length times gamma per bounce; the phase carries -2*pi*f*tau plus an
    optional seeded uniform random term.
    """
    paths = trace_paths(scene, tx, rx, max_order)
    rng = np.random.default_rng(seed) if random_phase else None
    rows = []
    for verts, order in paths:
        verts = np.asarray(verts)
        d = float(np.sum(np.linalg.norm(np.diff(verts, axis=0), axis=1)))
        tau = d / SPEED_OF_LIGHT
        alpha = SPEED_OF_LIGHT / (4 * np.pi * carrier_freq * d) * gamma ** order
        alpha *= np.exp(-2j * np.pi * carrier_freq * tau)
        phi_d, th_d = _angles(verts[1] - verts[0])
        phi_a, th_a = _angles(verts[-2] - verts[-1])
        rows.append([alpha, tau, phi_d[0], th_d[0], phi_a[0], th_a[0], order])
    if rng is not None:
        # drawn in discovery order so the result does not depend on sorting
        phases = rng.uniform(0.0, 2 * np.pi, size=len(rows))
        for r, ph in zip(rows, phases):
            r[0] = r[0] * np.exp(1j * ph)
    rows.sort(key=lambda r: (-abs(r[0]), r[1]))
    rows = rows[:cap]
    return MpcList(tuple(
        Mpc(complex(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5]),
            int(r[6]), int(r[6]) == 0)
        for r in rows))


def trace_link(scene: Scene, config: TraceConfig, seed: Optional[int] = None) -> MpcList:
    """Downlink BS -> ego antenna with the configured tracer settings."""
    return trace_mpcs(scene, scene.bs_position, scene.ego_position, config.max_order,
                      config.carrier_freq, config.cap, config.gamma, config.random_phase, seed)

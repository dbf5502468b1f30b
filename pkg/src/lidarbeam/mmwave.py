"""Wideband geometric MIMO channel, beam codebooks and beam-pair powers.

Angle convention, shared with the ray tracer: azimuth ``phi`` is measured
from +x in the xy-plane, elevation ``theta`` from the horizon. A planar
array lies in its local y'z-plane with broadside along local +x'; ``yaw``
rotates the local frame about z (yaw = 0 puts the array in the global
yz-plane facing +x).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .raytrace import MpcList


class OutageError(ValueError):
    """Raised when a channel delivers zero power on every beam pair."""


@dataclass(frozen=True)
class ArrayGeometry:
    n1: int
    n2: int
    element_spacing: float = 0.5  # wavelengths
    yaw: float = 0.0

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("array dimensions must be >= 1")

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def rotated(self, yaw: float) -> "ArrayGeometry":
        return ArrayGeometry(self.n1, self.n2, self.element_spacing, float(yaw))


@dataclass(frozen=True)
class OfdmConfig:
    K: int = 64
    bandwidth: float = 100e6
    carrier: float = 60e9
    L_taps: int = 32
    rolloff: float = 0.1
    sync_first_path: bool = True  # delays measured from the earliest arrival

    def __post_init__(self):
        if not (1 <= self.L_taps <= self.K):
            raise ValueError("need K >= L_taps >= 1")

    @property
    def T_s(self) -> float:
        return 1.0 / self.bandwidth

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return dict(vars(self))


@dataclass(frozen=True)
class Codebook:
    vectors: np.ndarray  # (count, N) unit-norm rows
    tags: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        if v.ndim != 2:
            raise ValueError("codebook vectors must be a 2-D array")
        object.__setattr__(self, "vectors", v)
        tags = tuple(self.tags) if self.tags else ("dft",) * len(v)
        if len(tags) != len(v):
            raise ValueError("one provenance tag per vector")
        object.__setattr__(self, "tags", tags)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def N(self) -> int:
        return self.vectors.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """(N, count): codevectors as columns."""
        return self.vectors.T

    def subset(self, idx) -> "Codebook":
        idx = list(idx)
        return Codebook(self.vectors[idx], tuple(self.tags[i] for i in idx))

    def save(self, path) -> None:
        """Text format: "N count" header, a "# tags" line, then one vector per
        line with one ``re+imj`` token per entry."""
        lines = [f"{self.N} {len(self)}", "# tags " + " ".join(self.tags)]
        for row in self.vectors:
            lines.append(" ".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        n, count = (int(t) for t in lines[0].split())
        tags = ()
        body = lines[1:]
        if body and body[0].startswith("#"):
            tags = tuple(body[0].split()[2:])
            body = body[1:]
        vecs = np.array([[complex(tok) for tok in ln.split()] for ln in body], dtype=complex)
        vecs = vecs.reshape(count, n)
        return cls(vecs, tags)


# ---------------------------------------------------------------------------
# steering vectors and pulse shaping


def _element_grid(array: ArrayGeometry):
    m1, m2 = np.meshgrid(np.arange(array.n1), np.arange(array.n2), indexing="ij")
    return m1.ravel(), m2.ravel()


def direction_cosines(array: ArrayGeometry, phi, theta):
    """(u, v) of a direction in the array's local frame."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return np.cos(theta) * np.sin(phi - array.yaw), np.sin(theta)


def steering_vectors(array: ArrayGeometry, phi, theta) -> np.ndarray:
    """(P, N) unit-norm array responses for P directions."""
    u, v = direction_cosines(array, np.atleast_1d(phi), np.atleast_1d(theta))
    m1, m2 = _element_grid(array)
    phase = 2 * np.pi * array.element_spacing * (np.outer(u, m1) + np.outer(v, m2))
    return np.exp(1j * phase) / np.sqrt(array.size)


def steering_vector(array: ArrayGeometry, phi: float, theta: float) -> np.ndarray:
    return steering_vectors(array, phi, theta)[0]


def raised_cosine(t, T: float, beta: float = 0.1, span: float = 8.0) -> np.ndarray:
    """Unit-peak raised-cosine pulse, zero beyond ``span`` symbol periods."""
    x = np.asarray(t, dtype=float) / T
    out = np.sinc(x)
    if beta > 0:
        den = 1.0 - (2.0 * beta * x) ** 2
        sing = np.abs(den) < 1e-10
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(sing, np.pi / 4 * np.sinc(1.0 / (2.0 * beta)),
                           out * np.cos(np.pi * beta * x) / den)
    return np.where(np.abs(x) > span, 0.0, out)


# ---------------------------------------------------------------------------
# channel


def _relative_delays(mpcs: MpcList, cfg: OfdmConfig):
    taus = mpcs.taus
    if cfg.sync_first_path and len(taus):
        taus = taus - taus.min()
    return taus


def _path_responses(mpcs: MpcList, tx_array: ArrayGeometry, rx_array: ArrayGeometry):
    arr = mpcs.to_array()
    a_t = steering_vectors(tx_array, arr[:, 3], arr[:, 4])
    a_r = steering_vectors(rx_array, arr[:, 5], arr[:, 6])
    return a_t, a_r


def assemble_taps(mpcs: MpcList, cfg: OfdmConfig, tx_array: ArrayGeometry,
                  rx_array: ArrayGeometry) -> np.ndarray:
    """Time-domain taps H[n], shape (L_taps, N_r, N_t)."""
    Nt, Nr = tx_array.size, rx_array.size
    if len(mpcs) == 0:
        return np.zeros((cfg.L_taps, Nr, Nt), dtype=complex)
    a_t, a_r = _path_responses(mpcs, tx_array, rx_array)
    n = np.arange(cfg.L_taps)
    g = raised_cosine(n[:, None] * cfg.T_s - _relative_delays(mpcs, cfg)[None, :], cfg.T_s, cfg.rolloff)
    weights = np.sqrt(Nt * Nr) * g * mpcs.alphas[None, :]  # (L, P)
    return np.einsum("lp,pr,pt->lrt", weights, a_r, a_t.conj(), optimize=True)


def freq_channel(taps: np.ndarray, K: int) -> np.ndarray:
    """H[k] = sum_n H[n] exp(-j 2 pi k n / K), shape (K, N_r, N_t)."""
    taps = np.asarray(taps)
    if K < taps.shape[0]:
        raise ValueError("K must be >= number of taps")
    return np.fft.fft(taps, n=K, axis=0)


def taps_from_freq(H: np.ndarray, L_taps: int) -> np.ndarray:
    return np.fft.ifft(H, axis=0)[:L_taps]


def channel_from_mpcs(mpcs: MpcList, cfg: OfdmConfig, tx_array, rx_array) -> np.ndarray:
    return freq_channel(assemble_taps(mpcs, cfg, tx_array, rx_array), cfg.K)


# ---------------------------------------------------------------------------
# codebooks


def dft_codebook(array: ArrayGeometry) -> Codebook:
    """Orthonormal 2-D DFT codebook (Kronecker product of 1-D DFTs)."""
    def dft(n):
        k = np.arange(n)
        return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
    vecs = np.kron(dft(array.n1), dft(array.n2))  # rows indexed by (k1, k2)
    return Codebook(vecs, ("dft",) * array.size)


def _adjacent_combos(array: ArrayGeometry, dft: np.ndarray) -> np.ndarray:
    n1, n2 = array.n1, array.n2
    out = []
    for k1 in range(n1):
        for k2 in range(n2):
            i = k1 * n2 + k2
            if k1 + 1 < n1:
                out.append((dft[i] + dft[i + n2]) / np.sqrt(2))
            if k2 + 1 < n2:
                out.append((dft[i] + dft[i + 1]) / np.sqrt(2))
    return np.array(out, dtype=complex).reshape(-1, array.size)


def build_candidate_codebook(array: ArrayGeometry, steered_angles: Sequence = (),
                             n_random: int = 0, seed: int = 0) -> Codebook:
    """DFT vectors, steered vectors on ``steered_angles`` [(phi, theta), ...],
    normalized sums of neighbouring DFT vectors and ``n_random`` uniformly
    random unit vectors, with near-duplicates removed."""
    dft = dft_codebook(array).vectors
    blocks = [(dft, "dft")]
    if len(steered_angles):
        ang = np.asarray(steered_angles, dtype=float).reshape(-1, 2)
        blocks.append((steering_vectors(array, ang[:, 0], ang[:, 1]), "steered"))
    blocks.append((_adjacent_combos(array, dft), "combo"))
    if n_random:
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(n_random, array.size)) + 1j * rng.normal(size=(n_random, array.size))
        blocks.append((z / np.linalg.norm(z, axis=1, keepdims=True), "random"))

    kept, tags = [], []
    for vecs, tag in blocks:
        for v in vecs:
            v = v / np.linalg.norm(v)
            if kept and np.max(np.abs(np.asarray(kept).conj() @ v)) > 1 - 1e-9:
                continue
            kept.append(v)
            tags.append(tag)
    return Codebook(np.array(kept, dtype=complex).reshape(-1, array.size), tuple(tags))


# ---------------------------------------------------------------------------
# beam powers, selection, labels


def beam_powers(H: np.ndarray, Ct: Codebook, Cr: Codebook) -> np.ndarray:
    """y[p, q] = sum_k |w_q^H H[k] f_p|^2, shape (|Ct|, |Cr|)."""
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[None]
    if H.shape[1] != Cr.N or H.shape[2] != Ct.N:
        raise ValueError(f"channel {H.shape[1:]} does not match codebooks ({Cr.N}, {Ct.N})")
    s = np.matmul(Cr.vectors.conj(), np.matmul(H, Ct.matrix))  # (K, |Cr|, |Ct|)
    return np.sum(s.real ** 2 + s.imag ** 2, axis=0).T


def beam_powers_from_mpcs(mpcs: MpcList, cfg: OfdmConfig, tx_array, rx_array,
                          Ct: Codebook, Cr: Codebook) -> np.ndarray:
    """Same quantity as ``beam_powers(channel_from_mpcs(...))`` evaluated
    per path, which is much cheaper for large candidate codebooks."""
    if len(mpcs) == 0:
        return np.zeros((len(Ct), len(Cr)))
    a_t, a_r = _path_responses(mpcs, tx_array, rx_array)
    n = np.arange(cfg.L_taps)
    g = raised_cosine(n[:, None] * cfg.T_s - _relative_delays(mpcs, cfg)[None, :], cfg.T_s, cfg.rolloff)
    k = np.arange(cfg.K)
    G = np.exp(-2j * np.pi * np.outer(k, n) / cfg.K) @ g  # (K, P)
    c = np.sqrt(tx_array.size * rx_array.size) * G * mpcs.alphas[None, :]
    M = c.T @ c.conj()  # (P, P)
    T = a_t.conj() @ Ct.matrix  # (P, |Ct|): a_t^H f_p
    R = Cr.vectors.conj() @ a_r.T  # (|Cr|, P): w_q^H a_r
    Z = T.T[:, None, :] * R[None, :, :]  # (|Ct|, |Cr|, P)
    return np.einsum("pql,pql->pq", Z @ M, Z.conj()).real


def best_pair(y: np.ndarray):
    """Index pair of the largest entry; ties go to the smaller flat index."""
    y = np.asarray(y)
    if not np.any(y > 0):
        raise OutageError("all beam pairs carry zero power")
    flat = int(np.argmax(y))
    return divmod(flat, y.shape[1])


def make_label(y: np.ndarray, clip_db: float = 6.0) -> np.ndarray:
    """Flat distribution over beam pairs: entries more than ``clip_db`` below
    the maximum are zeroed, the rest normalized to unit sum."""
    y = np.asarray(y, dtype=float).ravel()
    ymax = y.max() if y.size else 0.0
    if not ymax > 0:
        raise OutageError("cannot label an all-zero beam power matrix")
    keep = y >= ymax * 10.0 ** (-clip_db / 10.0)
    out = np.where(keep, y, 0.0)
    return out / out.sum()


def selection_counts(best_pairs: Iterable, n_t: int, n_r: int):
    ct = np.zeros(n_t, dtype=int)
    cr = np.zeros(n_r, dtype=int)
    for p, q in best_pairs:
        ct[p] += 1
        cr[q] += 1
    return ct, cr


def prune_from_best_pairs(cand_t: Codebook, cand_r: Codebook, best_pairs, min_count: int):
    best_pairs = list(best_pairs)
    if not best_pairs:
        raise ValueError("no training channels to prune with")
    ct, cr = selection_counts(best_pairs, len(cand_t), len(cand_r))
    keep_t = np.nonzero(ct > min_count)[0]
    keep_r = np.nonzero(cr > min_count)[0]
    if len(keep_t) == 0 or len(keep_r) == 0:
        raise ValueError(f"pruning with min_count={min_count} leaves an empty codebook; "
                         "lower min_count")
    return cand_t.subset(keep_t), cand_r.subset(keep_r)


def prune_codebooks(cand_t: Codebook, cand_r: Codebook, training_channels, min_count: int):
    """Keep the codevectors chosen as optimum more than ``min_count`` times
    over the training channels; candidate order is preserved."""
    pairs = []
    for H in training_channels:
        y = beam_powers(H, cand_t, cand_r)
        if np.any(y > 0):
            pairs.append(best_pair(y))
    return prune_from_best_pairs(cand_t, cand_r, pairs, min_count)

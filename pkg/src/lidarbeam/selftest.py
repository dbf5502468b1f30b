"""Brute-force oracles for the combinatorial kernels.

Each oracle is written with plain Python loops and scalar arithmetic so it
shares no code path with the vectorized implementation it checks.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .learn.network import rank_outputs
from .learn.stump import fit_stump
from .mmwave import Codebook, beam_powers, best_pair


def oracle_beam_powers(H, ft, wr):
    """y[p][q] = sum_k |sum_i sum_j conj(w[q][i]) H[k][i][j] f[p][j]|^2."""
    K, Nr, Nt = len(H), len(H[0]), len(H[0][0])
    y = [[0.0] * len(wr) for _ in ft]
    for p, f in enumerate(ft):
        for q, w in enumerate(wr):
            total = 0.0
            for k in range(K):
                s = 0j
                for i in range(Nr):
                    for j in range(Nt):
                        s += complex(w[i]).conjugate() * complex(H[k][i][j]) * complex(f[j])
                total += abs(s) ** 2
            y[p][q] = total
    return y


def oracle_best_pair(y):
    best, where = None, None
    for p, row in enumerate(y):
        for q, v in enumerate(row):
            if best is None or v > best:
                best, where = v, (p, q)
    return where


def oracle_stump_errors(d, labels):
    """Minimum training error over every candidate threshold, and the
    smallest threshold achieving it."""
    vals = sorted(set(v for v in d))
    cands = [0.0] + [(a + b) / 2 for a, b in zip(vals, vals[1:])] + [float("inf")]
    best_err, best_g = None, None
    for g in sorted(set(cands)):
        err = sum((v >= g) != bool(l) for v, l in zip(d, labels))
        if best_err is None or err < best_err:
            best_err, best_g = err, g
    return best_err, best_g


def oracle_top_m(scores, M):
    """Repeatedly take the largest remaining score, first index on ties."""
    remaining = list(range(len(scores)))
    out = []
    for _ in range(M):
        pick = remaining[0]
        for i in remaining:
            if scores[i] > scores[pick]:
                pick = i
        out.append(pick)
        remaining.remove(pick)
    return out


def _unit(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


@dataclass
class CheckResult:
    name: str
    instances: int
    failures: int
    worst: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def check_beam_powers(n=1000, seed=0, rtol=1e-10) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    fails, worst = 0, 0.0
    for _ in range(n):
        nt, nr = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        pt, pr, K = int(rng.integers(1, 7)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        H = rng.normal(size=(K, nr, nt)) + 1j * rng.normal(size=(K, nr, nt))
        ct = Codebook(np.array([_unit(rng, nt) for _ in range(pt)]))
        cr = Codebook(np.array([_unit(rng, nr) for _ in range(pr)]))
        got = beam_powers(H, ct, cr)
        ref = np.array(oracle_beam_powers(H.tolist(), ct.vectors.tolist(), cr.vectors.tolist()))
        err = float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)))
        worst = max(worst, err)
        fails += err > rtol
    return CheckResult("beam_powers", n, fails, worst, time.perf_counter() - t0)


def check_best_pair(n=1000, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    fails = 0
    for i in range(n):
        shape = (int(rng.integers(1, 7)), int(rng.integers(1, 5)))
        # small integer values make ties common
        y = rng.integers(0, 4, size=shape).astype(float) if i % 2 else rng.random(shape)
        if not np.any(y > 0):
            y[0, 0] = 1.0
        fails += tuple(best_pair(y)) != oracle_best_pair(y.tolist())
    return CheckResult("best_pair", n, fails, 0.0, time.perf_counter() - t0)


def check_fit_stump(n=1000, seed=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    fails = 0
    for i in range(n):
        m = int(rng.integers(2, 15))
        d = rng.integers(0, 6, size=m).astype(float) if i % 2 else rng.exponential(2.0, size=m)
        labels = rng.random(m) < 0.5
        labels[0], labels[1] = True, False
        model = fit_stump(d, labels)
        got_err = int(np.sum(model.predict_los(d) != labels))
        ref_err, ref_g = oracle_stump_errors(d.tolist(), labels.tolist())
        fails += got_err != ref_err or model.gamma != ref_g
    return CheckResult("fit_stump", n, fails, 0.0, time.perf_counter() - t0)


def check_top_m(n=1000, seed=3) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    fails = 0
    for i in range(n):
        c = int(rng.integers(1, 25))
        scores = rng.integers(0, 5, size=c).astype(float) if i % 2 else rng.random(c)
        M = int(rng.integers(1, c + 1))
        got = rank_outputs(scores[None])[0, :M].tolist()
        fails += got != oracle_top_m(scores.tolist(), M)
    return CheckResult("top_m", n, fails, 0.0, time.perf_counter() - t0)


def run_selftest(n: int = 1000, seed: int = 0):
    return [check_beam_powers(n, seed), check_best_pair(n, seed + 1),
            check_fit_stump(n, seed + 2), check_top_m(n, seed + 3)]

"""Geometric LOS baseline: threshold on the point-to-link distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StumpModel:
    gamma: float

    def predict_los(self, dhat):
        """LOS where the closest obstacle point stays at least gamma away."""
        return np.asarray(dhat, dtype=float) >= self.gamma


def min_dist_to_line(points, p_b, p_v) -> float:
    """Smallest distance from any point to the segment p_b-p_v; inf when
    there are no points."""
    pts = np.asarray(getattr(points, "points", points), dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return float("inf")
    a = np.asarray(p_b, dtype=float)
    d = np.asarray(p_v, dtype=float) - a
    dd = float(d @ d)
    if dd == 0:
        raise ValueError("segment endpoints coincide")
    t = np.clip((pts - a) @ d / dd, 0.0, 1.0)
    return float(np.sqrt(np.min(np.sum((a + t[:, None] * d - pts) ** 2, axis=1))))


def fit_stump(dhats, labels) -> StumpModel:
    """Threshold minimizing training errors of "NLOS iff dhat < gamma".

    ``labels`` are truthy for LOS. Candidates are 0, +inf and midpoints of
    consecutive distinct values; the smallest best candidate wins.
    """
    d = np.asarray(dhats, dtype=float)
    los = np.asarray(labels, dtype=bool)
    if len(d) != len(los):
        raise ValueError("dhats and labels differ in length")
    if los.all() or not los.any():
        raise ValueError("fit_stump needs both LOS and NLOS examples")
    vals = np.unique(d)
    finite = vals[np.isfinite(vals)]
    mids = (finite[:-1] + finite[1:]) / 2
    cands = np.unique(np.concatenate([[0.0], mids, [np.inf]]))
    # errors(g) = #LOS with d < g  +  #NLOS with d >= g
    d_los = np.sort(d[los])
    d_nlos = np.sort(d[~los])
    los_below = np.searchsorted(d_los, cands, side="left")
    nlos_at_or_above = len(d_nlos) - np.searchsorted(d_nlos, cands, side="left")
    errors = los_below + nlos_at_or_above
    return StumpModel(float(cands[int(np.argmin(errors))]))


def stump_error(model: StumpModel, dhats, labels) -> float:
    pred = model.predict_los(dhats)
    return float(np.mean(pred != np.asarray(labels, dtype=bool)))

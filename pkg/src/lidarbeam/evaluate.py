"""Figures of merit: top-M accuracy, throughput ratio R_T and binary error."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np


def _check_lengths(a, b):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def topM_accuracy(recommendations, truths, M: int) -> float:
    """Fraction of examples whose true class is among the first M
    recommended entries. ``truths`` are flat class indices."""
    _check_lengths(recommendations, truths)
    if len(truths) == 0:
        raise ValueError("no examples to score")
    hits = 0
    for rec, t in zip(recommendations, truths):
        if len(rec) < M:
            raise ValueError(f"recommendation list shorter than M={M}")
        hits += int(t) in (int(v) for v in rec[:M])
    return hits / len(truths)


def throughput_ratio(y_matrices, recommendations, M: int) -> float:
    """sum_i log2(1 + y_i[best recommended]) / sum_i log2(1 + y_i[optimum]).

    Recommendations are flat indices p * |Cr| + q into each y matrix.
    Outage examples (all-zero y) are skipped in both sums.
    """
    _check_lengths(y_matrices, recommendations)
    num = den = 0.0
    for y, rec in zip(y_matrices, recommendations):
        flat = np.asarray(y, dtype=float).ravel()
        if not np.any(flat > 0):
            continue
        if len(rec) < M:
            raise ValueError(f"recommendation list shorter than M={M}")
        num += math.log2(1.0 + float(np.max(flat[np.asarray(rec[:M], dtype=int)])))
        den += math.log2(1.0 + float(flat.max()))
    if den == 0.0:
        raise ValueError("throughput ratio undefined: every example is an outage")
    return num / den


def misclassification_error(predictions, truths) -> float:
    _check_lengths(predictions, truths)
    if len(truths) == 0:
        raise ValueError("no examples to score")
    return sum(bool(p) != bool(t) for p, t in zip(predictions, truths)) / len(truths)


def overhead_factor(rt_curve: Dict[int, float], num_classes: int, floor: float) -> Optional[float]:
    """num_classes / M for the smallest M whose R_T reaches ``floor``;
    None when no evaluated M reaches it."""
    for M in sorted(rt_curve):
        if rt_curve[M] >= floor:
            return num_classes / M
    return None


def frequency_ranking(truths, num_classes: int) -> np.ndarray:
    """Classes ordered by training frequency, ties to the smaller index.
    Used as the data-blind prior baseline."""
    counts = np.bincount(np.asarray(truths, dtype=int), minlength=num_classes)
    return np.argsort(-counts, kind="stable")


@dataclass
class EvalReport:
    accuracy: Dict[int, float]
    rt: Dict[int, float]
    n: int
    condition: str  # e.g. "LOS/noise-free"
    binary_error: Optional[float] = None
    n_outage: int = 0
    extra: dict = field(default_factory=dict)

    def check(self, num_classes: Optional[int] = None) -> None:
        """Assert the structural invariants of the curves."""
        for name, curve in (("accuracy", self.accuracy), ("R_T", self.rt)):
            Ms = sorted(curve)
            vals = [curve[m] for m in Ms]
            if any(not 0.0 <= v <= 1.0 + 1e-12 for v in vals):
                raise AssertionError(f"{self.condition}: {name} outside [0, 1]")
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise AssertionError(f"{self.condition}: {name} decreases with M")
        if num_classes is not None and num_classes in self.rt and self.rt[num_classes] != 1.0:
            raise AssertionError(f"{self.condition}: R_T at M={num_classes} is not 1")

    def to_dict(self) -> dict:
        return {"condition": self.condition, "n": self.n, "n_outage": self.n_outage,
                "binary_error": self.binary_error,
                "accuracy": {str(k): v for k, v in sorted(self.accuracy.items())},
                "rt": {str(k): v for k, v in sorted(self.rt.items())}, "extra": self.extra}

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        return cls({int(k): v for k, v in d["accuracy"].items()},
                   {int(k): v for k, v in d["rt"].items()}, d["n"], d["condition"],
                   d.get("binary_error"), d.get("n_outage", 0), d.get("extra", {}))

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["M", "accuracy", "R_T"])
            for M in sorted(self.accuracy):
                w.writerow([M, repr(self.accuracy[M]), repr(self.rt.get(M, float("nan")))])


def evaluate_selector(rankings, truths, y_matrices, Ms: Sequence[int], condition: str,
                      num_classes: int, n_outage: int = 0) -> EvalReport:
    """Accuracy and R_T curves from full per-example rankings."""
    Ms = sorted({int(m) for m in Ms if 1 <= m <= num_classes} | {num_classes})
    acc = {M: topM_accuracy(rankings, truths, M) for M in Ms}
    rt = {M: throughput_ratio(y_matrices, rankings, M) for M in Ms}
    return EvalReport(acc, rt, len(truths), condition, n_outage=n_outage)

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarbeam.evaluate import (EvalReport, evaluate_selector, frequency_ranking,
                                misclassification_error, overhead_factor, throughput_ratio,
                                topM_accuracy)


def test_topM_accuracy_examples():
    perm = [[2, 0, 1, 3]] * 3
    assert topM_accuracy(perm, [0, 1, 3], 4) == 1.0
    assert topM_accuracy([[5, 1], [5, 2]], [5, 5], 1) == 1.0
    # hits at ranks 1, 4 and 2
    recs = [[7, 1, 2, 3], [1, 2, 3, 7], [1, 7, 2, 3]]
    assert topM_accuracy(recs, [7, 7, 7], 2) == pytest.approx(2 / 3)


def test_topM_accuracy_errors():
    with pytest.raises(ValueError, match="length mismatch"):
        topM_accuracy([[0]], [0, 1], 1)
    with pytest.raises(ValueError, match="shorter than M"):
        topM_accuracy([[0]], [0], 2)


def test_throughput_ratio_examples():
    y = np.array([[3.0, 1.0], [0.5, 0.0]])
    assert throughput_ratio([y], [[1, 2]], 2) == pytest.approx(0.5)
    assert throughput_ratio([y], [[1, 0]], 2) == 1.0
    # the outage is skipped
    assert throughput_ratio([y, np.zeros((2, 2))], [[0], [3]], 1) == 1.0
    with pytest.raises(ValueError, match="outage"):
        throughput_ratio([np.zeros((2, 2))], [[0]], 1)
    with pytest.raises(ValueError, match="length mismatch"):
        throughput_ratio([y], [], 1)


def test_misclassification_examples():
    truth = [True, False] * 5
    assert misclassification_error(truth, truth) == 0.0
    assert misclassification_error([not t for t in truth], truth) == 1.0
    pred = list(truth)
    for i in (0, 3, 7):
        pred[i] = not pred[i]
    assert misclassification_error(pred, truth) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        misclassification_error([True], [True, False])


def test_overhead_factor():
    curve = {1: 0.5, 5: 0.85, 10: 0.95, 240: 1.0}
    assert overhead_factor(curve, 240, 0.9) == 24.0
    assert overhead_factor(curve, 240, 1.0) == 1.0
    assert overhead_factor({1: 0.2}, 240, 0.9) is None


def test_frequency_ranking():
    np.testing.assert_array_equal(frequency_ranking([2, 2, 0, 1, 0, 2], 4), [2, 0, 1, 3])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(1, 20))
def test_curves_monotone_and_bounded(seed, n_classes, n):
    rng = np.random.default_rng(seed)
    ys = [rng.exponential(size=n_classes) * (rng.random(n_classes) < 0.7) for _ in range(n)]
    ys[0][0] = 1.0  # at least one example is not an outage
    truths = [int(np.argmax(y)) for y in ys]
    ranks = [rng.permutation(n_classes) for _ in range(n)]
    rep = evaluate_selector(ranks, truths, ys, range(1, n_classes + 1), "test", n_classes)
    rep.check(n_classes)
    assert rep.accuracy[n_classes] == 1.0 and rep.rt[n_classes] == 1.0


def test_rt_one_when_optimum_recommended():
    rng = np.random.default_rng(0)
    ys = [rng.exponential(size=6) for _ in range(10)]
    ranks = [[int(np.argmax(y)), 0, 1] for y in ys]
    assert throughput_ratio(ys, ranks, 1) == 1.0


def test_report_round_trip_and_check(tmp_path):
    rep = EvalReport({1: 0.5, 2: 0.75}, {1: 0.8, 2: 1.0}, 4, "LOS/noise-free", 0.1, 1, {"k": 1})
    rep.check(2)
    rep.write_json(tmp_path / "r.json")
    assert EvalReport.from_dict(json.load(open(tmp_path / "r.json"))) == rep
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines == ["M,accuracy,R_T", "1,0.5,0.8", "2,0.75,1.0"]
    with pytest.raises(AssertionError, match="decreases"):
        EvalReport({1: 0.5, 2: 0.4}, {1: 1.0, 2: 1.0}, 1, "x").check()
    with pytest.raises(AssertionError, match="not 1"):
        EvalReport({1: 0.5}, {1: 0.9}, 1, "x").check(1)

import numpy as np
import pytest

from speechemo.metrics import (Metrics, FoldResult, aggregate, confusion_matrix, round_pct, unweighted_accuracy,
                               weighted_accuracy)

# per-fold WA and UA from the published ten-fold table
TABLE2 = [(64.1, 60.5), (68.8, 63.8), (70.3, 64.4), (62.0, 62.9), (64.8, 59.8),
          (66.4, 63.6), (68.5, 65.1), (64.3, 60.1), (64.8, 62.2), (51.0, 54.1)]


def _fold_results(rows):
    return [FoldResult(k, Metrics(wa / 100, ua / 100, np.zeros((4, 4), int))) for k, (wa, ua) in enumerate(rows, 1)]


def test_wa_examples():
    assert weighted_accuracy(np.diag([3, 4, 5, 6])) == 1.0
    cm = np.zeros((4, 4), int)
    cm[:2, :2] = [[3, 1], [2, 2]]
    assert weighted_accuracy(cm) == 5 / 8
    assert weighted_accuracy(np.ones((4, 4)) - np.eye(4)) == 0.0
    with pytest.raises(ValueError):
        weighted_accuracy(np.zeros((4, 4)))


def test_ua_examples():
    cm = np.array([[2, 0, 0, 0], [1, 1, 0, 0], [0, 3, 3, 0], [0, 0, 5, 0]])
    assert unweighted_accuracy(cm) == 0.5
    m = Metrics.from_predictions([0] * 97 + [1, 2, 3], [0] * 100)
    assert m.wa == 0.97 and m.ua == 0.25
    cm = np.array([[1, 1, 0, 0], [0, 0, 0, 0], [0, 0, 2, 0], [1, 0, 0, 3]])
    assert unweighted_accuracy(cm) == pytest.approx((0.5 + 1 + 0.75) / 3, abs=0)
    with pytest.raises(ValueError):
        unweighted_accuracy(np.zeros((4, 4)))


def _brute(y_true, y_pred):
    correct = sum(1 for t, p in zip(y_true, y_pred) if t == p)
    recalls = []
    for c in range(4):
        idx = [i for i, t in enumerate(y_true) if t == c]
        if idx:
            recalls.append(sum(1 for i in idx if y_pred[i] == c) / len(idx))
    return correct / len(y_true), sum(recalls) / len(recalls)


def test_metrics_match_brute_force(rng):
    for _ in range(300):
        n = int(rng.integers(1, 60))
        y_true = rng.integers(0, 4, n).tolist()
        y_pred = rng.integers(0, 4, n).tolist()
        m = Metrics.from_predictions(y_true, y_pred)
        wa, ua = _brute(y_true, y_pred)
        assert m.wa == wa and m.ua == pytest.approx(ua, abs=1e-15)
        assert confusion_matrix(y_true, y_pred).sum(axis=1).tolist() == [y_true.count(c) for c in range(4)]


def test_balanced_wa_equals_ua(rng):
    y_true = np.repeat(np.arange(4), 7)
    y_pred = rng.integers(0, 4, 28)
    m = Metrics.from_predictions(y_true, y_pred)
    assert m.wa == pytest.approx(m.ua, abs=1e-15)


def test_merge_property(rng):
    a_t, a_p = rng.integers(0, 4, 30), rng.integers(0, 4, 30)
    b_t, b_p = rng.integers(0, 4, 17), rng.integers(0, 4, 17)
    merged = Metrics.from_confusion(confusion_matrix(a_t, a_p) + confusion_matrix(b_t, b_p))
    joint = Metrics.from_predictions(np.concatenate([a_t, b_t]), np.concatenate([a_p, b_p]))
    assert merged.wa == joint.wa and merged.ua == joint.ua


def test_round_pct():
    assert round_pct(61.65) == 61.7
    assert round_pct(64.5) == 64.5
    assert round_pct(100 * 0.6165) == 61.7
    assert round_pct(0.25, 1) == 0.3


def test_table2_aggregate():
    agg = aggregate(_fold_results(TABLE2))
    r = agg.rounded()
    assert r["mean_wa"] == 64.5 and r["mean_ua"] == 61.7
    assert [row[:3] for row in agg.table][:3] == [(1, 1, "F"), (2, 1, "M"), (3, 2, "F")]
    # best five by UA: folds 7, 3, 2, 6, 4
    assert r["best5_ua"] == round_pct((65.1 + 64.4 + 63.8 + 63.6 + 62.9) / 5)


def test_aggregate_permutation_invariant(rng):
    results = _fold_results(TABLE2)
    ref = aggregate(results)
    for _ in range(10):
        shuffled = [results[i] for i in rng.permutation(10)]
        assert aggregate(shuffled) == ref


def test_aggregate_single_fold():
    agg = aggregate(_fold_results([(70.0, 65.0)]))
    assert agg.mean_wa == agg.best5_wa == 0.7 and agg.mean_ua == 0.65
    with pytest.raises(ValueError):
        aggregate([])


def test_fold_result_identity():
    r = FoldResult(4, Metrics(0.5, 0.5, np.eye(4)))
    assert (r.session, r.gender) == (2, "M")
    with pytest.raises(ValueError):
        FoldResult(0, r.metrics)

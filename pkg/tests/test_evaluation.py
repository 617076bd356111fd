import itertools
import warnings

import numpy as np
import pytest

from snmdd.evaluation import (ClassifierConfig, auc_score, crossval, evaluate, information_gain,
                              information_gain_ranking, read_predictions, single_feature_accuracy,
                              stratified_folds, threshold_fit, write_predictions)


def pairwise_auc(scores, truth):
    """Count concordant positive/negative pairs, ties worth one half."""
    pos = [s for s, t in zip(scores, truth) if t > 0]
    neg = [s for s, t in zip(scores, truth) if t <= 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_auc_hand_cases():
    # one of the four positive/negative pairs is swapped
    assert auc_score([0.9, 0.2, 0.4, 0.1], [1, 1, -1, -1]) == pytest.approx(0.75)
    # one of eight pairs swapped
    assert auc_score([0.9, 0.6, 0.8, 0.3, 0.2, 0.1], [1, 1, -1, -1, -1, -1]) == pytest.approx(0.875)
    assert np.isnan(auc_score([1, 2], [1, 1]))


def test_auc_matches_pair_count(rng):
    for _ in range(100):
        n = int(rng.integers(4, 30))
        truth = rng.choice([-1, 1], n)
        if len(set(truth)) < 2:
            continue
        scores = rng.integers(0, 5, n).astype(float)  # plenty of ties
        assert auc_score(scores, truth) == pytest.approx(pairwise_auc(scores, truth))


def test_perfect_predictions():
    truth = np.array([[1, -1, -1], [-1, 1, -1], [-1, -1, 1], [-1, -1, -1]])
    ev = evaluate(truth, truth, truth.astype(float))
    assert ev.acc == ev.auc == ev.micro_f1 == ev.macro_f1 == 1.0


def test_all_negative():
    truth = -np.ones((5, 3), dtype=int)
    with pytest.warns(RuntimeWarning):
        ev = evaluate(truth, truth)
    assert ev.acc == 1.0
    assert np.isnan(ev.micro_f1) and np.isnan(ev.macro_f1) and np.isnan(ev.auc)
    assert np.all(np.isnan(ev.per_class_f1))


def test_absent_class_excluded():
    truth = np.array([[1, -1, -1], [-1, -1, -1], [1, -1, -1], [-1, -1, 1]])
    pred = np.array([[1, -1, -1], [1, -1, -1], [1, -1, -1], [-1, -1, 1]])
    with pytest.warns(RuntimeWarning):
        ev = evaluate(pred, truth)
    assert np.isnan(ev.per_class_f1[1])
    assert ev.macro_f1 == pytest.approx(np.mean([0.8, 1.0]))
    assert ev.acc == 0.75


def test_exact_match_vs_per_class():
    truth = np.array([[1, -1, -1], [-1, 1, 1]])
    pred = np.array([[1, 1, -1], [-1, 1, 1]])
    ev = evaluate(pred, truth)
    assert ev.acc == 0.5
    assert ev.per_class_acc.tolist() == [1.0, 0.5, 1.0]


def test_micro_f1_between_class_extremes(rng):
    for _ in range(200):
        truth = rng.choice([-1, 1], (20, 3))
        truth[0] = 1  # every class has a positive
        pred = rng.choice([-1, 1], (20, 3))
        ev = evaluate(pred, truth)
        assert np.min(ev.per_class_f1) - 1e-12 <= ev.micro_f1 <= np.max(ev.per_class_f1) + 1e-12


def test_shape_mismatch():
    with pytest.raises(ValueError):
        evaluate(np.ones((2, 3)), np.ones((3, 3)))


# -- folds ---------------------------------------------------------------------------

def test_fold_sizes():
    rng = np.random.default_rng(0)
    truth = rng.choice([-1, 1], (500, 3))
    labeled = np.zeros(500, dtype=bool)
    labeled[rng.permutation(500)[:100]] = True
    folds = stratified_folds(truth, labeled, 5, seed=3)
    for f in range(5):
        assert np.sum(labeled & (folds == f)) == 20
        assert np.sum(~labeled & (folds == f)) == 80
    assert np.array_equal(folds, stratified_folds(truth, labeled, 5, seed=3))
    assert not np.array_equal(folds, stratified_folds(truth, labeled, 5, seed=4))


def test_folds_partition_and_balance(rng):
    for _ in range(20):
        n = int(rng.integers(40, 120))
        truth = np.where(rng.random((n, 3)) < 0.3, 1, -1)
        labeled = rng.random(n) < 0.4
        if labeled.sum() < 5 or (~labeled).sum() < 5:
            continue
        folds = stratified_folds(truth, labeled, 5, int(rng.integers(100)))
        assert set(folds.tolist()) == set(range(5))
        for f in range(5):
            sel = labeled & (folds == f)
            for k in range(3):
                share = np.sum(truth[labeled, k] > 0) / 5
                # round-robin by pattern: within one sample per pattern that contains class k
                n_patterns = len({tuple(r) for r in truth[labeled] if r[k] > 0})
                assert abs(np.sum(truth[sel, k] > 0) - share) <= max(1, n_patterns)
            assert abs(sel.sum() - labeled.sum() / 5) <= 1
            assert abs(np.sum(~labeled & (folds == f)) - (~labeled).sum() / 5) <= 1


def test_small_stratum_error():
    truth = -np.ones((20, 3), dtype=int)
    labeled = np.zeros(20, dtype=bool)
    labeled[:4] = True
    with pytest.raises(ValueError, match="fewer than 5"):
        stratified_folds(truth, labeled)


def test_crossval_on_separable_data():
    rng = np.random.default_rng(5)
    n = 150
    truth = -np.ones((n, 3), dtype=int)
    cls = rng.integers(0, 4, n)  # class 3 = no disorder
    for k in range(3):
        truth[cls == k, k] = 1
    X = np.eye(4)[cls] * 4 + 0.3 * rng.normal(size=(n, 4))
    labeled = rng.random(n) < 0.4
    res = crossval(X, truth, labeled, ClassifierConfig(method="svm", epochs=50), seed=1,
                   has_truth=np.ones(n, dtype=bool))
    assert len(res.folds) == 5
    assert res.mean()["acc"] >= 0.95
    assert res.sd()["acc"] >= 0
    res2 = crossval(X, truth, labeled, ClassifierConfig(method="svm", epochs=50), seed=1,
                    has_truth=np.ones(n, dtype=bool))
    assert np.array_equal(res.predictions, res2.predictions)


# -- information gain ------------------------------------------------------------------

def test_ig_identical_feature():
    y = np.array([1, -1] * 30)
    h = 1.0  # balanced binary label
    assert information_gain(y.astype(float), y) == pytest.approx(h)


def test_ig_constant_feature():
    y = np.array([1, -1, -1, 1, 1])
    assert information_gain(np.full(5, 3.0), y) == 0.0


def test_ig_independent_feature():
    rng = np.random.default_rng(11)
    for _ in range(10):
        y = rng.choice([-1, 1], 500)
        x = rng.permutation(np.arange(500, dtype=float))
        assert information_gain(x, y) < 0.05


def test_ig_masked_bin():
    y = np.array([1] * 10 + [-1] * 10)
    x = np.r_[np.full(10, np.nan), np.zeros(10)]
    assert information_gain(x, y) == pytest.approx(1.0)


def test_ig_ranking_order_and_ties():
    y = np.array([1, -1] * 20)
    X = np.column_stack([np.zeros(40), y.astype(float), np.ones(40), y * 2.0])
    r = information_gain_ranking(X, y, ["a", "b", "c", "d"])
    assert [n for n, _ in r] == ["b", "d", "a", "c"]


# -- single feature classifier -----------------------------------------------------------

def test_threshold_fit():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert threshold_fit(x, np.array([-1, -1, 1, 1])) == (2.5, 1)
    assert threshold_fit(x, np.array([1, 1, -1, -1])) == (2.5, -1)


def test_single_feature_accuracy():
    rng = np.random.default_rng(0)
    y = rng.choice([-1, 1], 200)
    assert single_feature_accuracy(y + 0.1 * rng.normal(size=200), y) == 1.0
    assert single_feature_accuracy(rng.normal(size=200), y) < 0.65


def test_predictions_csv(tmp_path):
    labels = np.array([[1, -1, -1], [-1, -1, 1]])
    scores = np.array([[0.5, -1.0, -2.0], [-0.25, -3.0, 1.5]])
    write_predictions(["a", "b"], labels, scores, tmp_path / "p.csv")
    head = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert head == "user_id,cr,nc,io,score_cr,score_nc,score_io"
    users, lab, sc = read_predictions(tmp_path / "p.csv")
    assert users == ["a", "b"] and np.array_equal(lab, labels) and np.array_equal(sc, scores)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sagnn.errors import ValidationError
from sagnn.metrics import (
    MetricsReport,
    accuracy,
    bucket_metrics,
    degree_bucket_labels,
    evaluate_predictions,
    f1_score,
    roc_auc,
    stratified_split,
)


def auc_by_pair_enumeration(scores, truth):
    """Oracle: wins + half-ties over all positive-negative pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    pos = scores[truth == 1]
    neg = scores[truth == 0]
    if len(pos) == 0 or len(neg) == 0:
        return None
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestAUC:
    def test_perfect_ordering_is_one(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_reversed_ordering_is_zero(self):
        assert roc_auc([0.1, 0.9], [1, 0]) == 0.0

    def test_worked_three_item_example(self):
        # pairs: (0.9 vs 0.8) win, (0.3 vs 0.8) loss -> (1 + 0) / 2
        assert roc_auc([0.9, 0.8, 0.3], [1, 0, 1]) == 0.5

    def test_single_class_is_undefined_not_zero(self):
        assert roc_auc([0.2, 0.9], [1, 1]) is None
        assert roc_auc([0.2, 0.9], [0, 0]) is None

    def test_matches_pair_enumeration_exactly(self):
        gen = np.random.default_rng(0)
        for trial in range(1000):
            n = int(gen.integers(2, 40))
            truth = gen.integers(0, 2, size=n)
            if truth.min() == truth.max():
                truth[0] = 1 - truth[0]
            # quantized scores force plenty of ties
            scores = np.round(gen.random(n), 1)
            assert roc_auc(scores, truth) == auc_by_pair_enumeration(scores, truth)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_invariant_under_sigmoid(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 50))
        truth = gen.integers(0, 2, size=n)
        if truth.min() == truth.max():
            truth[0] = 1 - truth[0]
        logits = np.round(gen.standard_normal(n) * 3, 1)
        probs = 1.0 / (1.0 + np.exp(-logits))
        assert roc_auc(logits, truth) == roc_auc(probs, truth)


class TestAccuracyF1:
    def test_confusion_matrix_hand_count(self):
        pred = [1, 1, 0, 0]
        true = [1, 0, 1, 0]
        # tp=1 fp=1 fn=1 tn=1: precision 0.5, recall 0.5
        assert accuracy(pred, true) == 0.5
        assert f1_score(pred, true) == 0.5

    def test_perfect_prediction(self):
        assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
        assert f1_score([1, 0, 1], [1, 0, 1]) == 1.0

    def test_f1_no_predicted_no_actual_positives(self):
        assert f1_score([0, 0], [0, 0]) == 1.0

    def test_f1_no_predicted_some_actual_positives(self):
        assert f1_score([0, 0], [1, 0]) == 0.0

    def test_f1_predicted_but_never_correct(self):
        assert f1_score([1, 0], [0, 1]) == 0.0

    def test_matches_confusion_oracle_randomized(self):
        gen = np.random.default_rng(1)
        for _ in range(200):
            n = int(gen.integers(1, 30))
            pred = gen.integers(0, 2, size=n)
            true = gen.integers(0, 2, size=n)
            tp = int(np.sum((pred == 1) & (true == 1)))
            fp = int(np.sum((pred == 1) & (true == 0)))
            fn = int(np.sum((pred == 0) & (true == 1)))
            assert accuracy(pred, true) == np.mean(pred == true)
            if tp == 0:
                expected = 1.0 if fp == fn == 0 else 0.0
            else:
                p = tp / (tp + fp)
                r = tp / (tp + fn)
                expected = 2 * p * r / (p + r)
            assert f1_score(pred, true) == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            accuracy([1, 0], [1])


class TestStratifiedSplit:
    def test_sixty_forty_class_arithmetic(self):
        labels = np.array([0] * 60 + [1] * 40)
        split = stratified_split(labels, (0.8, 0.1, 0.1), seed=0)
        assert np.sum(labels[split.train] == 0) == 48
        assert np.sum(labels[split.train] == 1) == 32
        assert np.sum(labels[split.val] == 0) == 6
        assert np.sum(labels[split.val] == 1) == 4
        assert np.sum(labels[split.test] == 0) == 6
        assert np.sum(labels[split.test] == 1) == 4

    def test_deterministic_per_seed(self):
        labels = np.array([0, 1] * 50)
        a = stratified_split(labels, seed=7)
        b = stratified_split(labels, seed=7)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.val, b.val)
        assert np.array_equal(a.test, b.test)
        c = stratified_split(labels, seed=8)
        assert not np.array_equal(a.train, c.train)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_partition_laws(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(40, 200))
        labels = gen.integers(0, 2, size=n)
        if min(np.bincount(labels, minlength=2)) < 10:
            labels[:20] = 0
            labels[20:40] = 1
        split = stratified_split(labels, seed=seed)
        parts = [set(split.train.tolist()), set(split.val.tolist()),
                 set(split.test.tolist())]
        assert parts[0] | parts[1] | parts[2] == set(range(len(labels)))
        assert not (parts[0] & parts[1] or parts[0] & parts[2]
                    or parts[1] & parts[2])

    def test_fraction_validation(self):
        labels = np.array([0, 1] * 20)
        with pytest.raises(ValidationError, match="sum"):
            stratified_split(labels, (0.5, 0.2, 0.2))

    def test_min_class_size_enforced(self):
        labels = np.array([0] * 50 + [1] * 5)
        with pytest.raises(ValidationError, match="need >="):
            stratified_split(labels)

    def test_round_trip_through_dict(self):
        from sagnn.metrics import Split
        labels = np.array([0, 1] * 20)
        split = stratified_split(labels, seed=3)
        ids = [f"p{i}" for i in range(len(labels))]
        data = split.to_dict(ids)
        back = Split.from_dict(data, {pid: i for i, pid in enumerate(ids)})
        assert np.array_equal(np.sort(split.train), back.train)
        assert np.array_equal(np.sort(split.test), back.test)


class TestBuckets:
    def test_single_bucket_equals_unbucketed(self):
        gen = np.random.default_rng(2)
        pred = gen.integers(0, 2, size=50)
        true = gen.integers(0, 2, size=50)
        scores = gen.random(50)
        whole = evaluate_predictions(pred, scores, true)
        bucketed = bucket_metrics(pred, scores, true, np.array(["all"] * 50))
        assert bucketed["all"].accuracy == whole.accuracy
        assert bucketed["all"].f1 == whole.f1
        assert bucketed["all"].auc == whole.auc
        assert bucketed["all"].n == whole.n

    def test_empty_bucket_reported_with_zero_size(self):
        pred = np.array([1, 0])
        out = bucket_metrics(pred, np.array([0.9, 0.1]), np.array([1, 0]),
                             np.array(["a", "a"]), bucket_order=["a", "b"])
        assert out["b"].n == 0
        assert out["b"].accuracy is None

    def test_degree_bucket_labels(self):
        labels, names = degree_bucket_labels([0, 5, 6, 20, 21, 100])
        assert labels.tolist() == ["0-5", "0-5", "6-20", "6-20", "21+", "21+"]
        assert names == ["0-5", "6-20", "21+"]

    def test_degree_bucket_coverage_enforced(self):
        with pytest.raises(ValidationError, match="cover"):
            degree_bucket_labels([3, 50], edges=((0, 5),))

    def test_report_serialization(self):
        report = MetricsReport(accuracy=0.5, f1=0.4, auc=None, n=10)
        report.buckets["x"] = MetricsReport(accuracy=1.0, f1=1.0, auc=1.0, n=2)
        data = report.to_dict()
        assert data["auc"] is None
        assert data["buckets"]["x"]["accuracy"] == 1.0

"""ROC/PR metrics against brute-force rank statistics."""

import numpy as np
import pytest

from trojanscan.errors import ConfigError
from trojanscan.eval import (
    build_metrics_report,
    imbalanced_eval,
    pr_auc,
    roc_auc,
    roc_curve,
    threshold_band,
    youden_threshold,
)


def pairwise_auc_oracle(scores, labels):
    """Wilcoxon form: P(score_pos > score_neg) + 0.5 * P(tie)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    wins = ties = 0
    for p in pos:
        for n in neg:
            wins += p > n
            ties += p == n
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def step_pr_auc_oracle(scores, labels):
    """Sum of precision * recall-increment over descending thresholds."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    total = labels.sum()
    area = 0.0
    prev_recall = 0.0
    for t in sorted(set(scores), reverse=True):
        dec = scores >= t
        tp = (dec & labels).sum()
        precision = tp / dec.sum()
        recall = tp / total
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [True, True, False, False]) == 1.0

    def test_all_equal_scores(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [True, False, True, False]) == 0.5

    def test_matches_pairwise_oracle_on_hand_data(self):
        scores = [0.9, 0.3, 0.8, 0.3, 0.1, 0.7]
        labels = [True, False, True, True, False, False]
        assert roc_auc(scores, labels) == pytest.approx(
            pairwise_auc_oracle(scores, labels), abs=1e-12
        )

    def test_matches_pairwise_oracle_random(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = rng.integers(4, 20)
            scores = rng.choice([0.1, 0.25, 0.5, 0.7, 0.9], size=n)
            labels = rng.random(n) < 0.5
            if labels.all() or not labels.any():
                continue
            assert roc_auc(scores, labels) == pytest.approx(
                pairwise_auc_oracle(scores, labels), abs=1e-12
            )

    def test_curve_shape(self):
        _, fpr, tpr = roc_curve([0.9, 0.1, 0.5], [True, False, False])
        assert fpr[0] == 0.0 and tpr[0] == 0.0
        assert fpr[-1] == 1.0 and tpr[-1] == 1.0
        assert (np.diff(fpr) >= 0).all() and (np.diff(tpr) >= 0).all()

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(8)
        scores = rng.normal(size=12)
        labels = rng.random(12) < 0.4
        labels[0], labels[1] = True, False
        assert roc_auc(scores, labels) == pytest.approx(
            roc_auc(np.exp(2.0 * scores), labels), abs=1e-12
        )

    def test_single_class_rejected(self):
        with pytest.raises(ConfigError):
            roc_auc([0.1, 0.2], [True, True])


class TestPrAuc:
    def test_perfect_ranking(self):
        assert pr_auc([0.9, 0.8, 0.2, 0.1], [True, True, False, False]) == 1.0

    def test_matches_step_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = rng.integers(4, 16)
            scores = rng.choice([0.2, 0.4, 0.6, 0.8], size=n)
            labels = rng.random(n) < 0.4
            if labels.all() or not labels.any():
                continue
            assert pr_auc(scores, labels) == pytest.approx(
                step_pr_auc_oracle(scores, labels), abs=1e-12
            )

    def test_hand_worked_case(self):
        # thresholds 0.9 -> P=1, R=0.5; 0.4 -> P=2/3, R=1
        scores = [0.9, 0.4, 0.4]
        labels = [True, True, False]
        expected = 0.5 * 1.0 + 0.5 * (2.0 / 3.0)
        assert pr_auc(scores, labels) == pytest.approx(expected, abs=1e-12)


class TestThresholds:
    def test_youden_on_separable(self):
        t = youden_threshold(np.array([0.9, 0.8, 0.2, 0.1]),
                             np.array([True, True, False, False]))
        assert 0.2 < t <= 0.8

    def test_threshold_band(self):
        scores = np.array([10.0, 9.0, 8.0, 1.0, 0.5, 0.2])
        labels = np.array([True, True, True, False, False, False])
        band = threshold_band(scores, labels, min_tpr=0.85, max_fpr=0.1)
        assert band is not None
        lo, hi = band
        assert lo <= 8.0 <= hi

    def test_threshold_band_impossible(self):
        scores = np.array([1.0, 1.0])
        labels = np.array([True, False])
        assert threshold_band(scores, labels, min_tpr=0.9, max_fpr=0.05) is None


class TestReports:
    def test_report_round_trip_fields(self):
        scores = {"m1": 0.9, "m2": 0.2, "m3": 0.7}
        truth = {"m1": True, "m2": False, "m3": False}
        report = build_metrics_report(scores, truth, threshold=0.5)
        d = report.to_dict()
        assert d["auc"] == 1.0
        assert d["decisions"] == {"m1": True, "m2": False, "m3": True}
        assert d["confusion"] == {"tp": 1, "fp": 1, "tn": 1, "fn": 0}

    def test_mismatched_ids_rejected(self):
        with pytest.raises(ConfigError):
            build_metrics_report({"a": 1.0}, {"b": True})

    def test_imbalanced_eval(self):
        scores = {f"c{i}": 0.1 * i for i in range(10)}
        scores["t0"] = 2.0
        scores["t1"] = 1.5
        truth = {k: k.startswith("t") for k in scores}
        report = imbalanced_eval(scores, truth)
        assert report.pr_auc_value == 1.0
        assert report.auc == 1.0
        assert report.extras["positives"] == 2

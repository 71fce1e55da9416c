"""Score-based evaluation: ROC/AUC and precision-recall curves.

Scores are model-level suspicion values (larger = more suspicious);
ground truth marks which models are backdoored. Equal scores are treated
as one threshold step, which makes the trapezoidal ROC area coincide with
the pairwise (rank) statistic counting ties as half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigError("scores and labels must be 1-D arrays of equal length")
    if not labels.any() or labels.all():
        raise ConfigError("need at least one positive and one negative model")
    return scores, labels


def roc_curve(scores, labels):
    """Threshold sweep over distinct score values (descending).

    Returns (thresholds, fpr, tpr) with a leading (inf, 0, 0) point and the
    all-accepting point last.
    """
    scores, labels = _validate(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    distinct = np.flatnonzero(np.diff(s)) if s.size > 1 else np.array([], dtype=int)
    cut = np.concatenate([distinct, [s.size - 1]])
    tp = np.cumsum(y)[cut]
    fp = np.cumsum(~y)[cut]
    tpr = tp / labels.sum()
    fpr = fp / (~labels).sum()
    thresholds = np.concatenate([[np.inf], s[cut]])
    return thresholds, np.concatenate([[0.0], fpr]), np.concatenate([[0.0], tpr])


def roc_auc(scores, labels):
    """Trapezoidal area under the ROC curve."""
    _, fpr, tpr = roc_curve(scores, labels)
    return float(np.trapezoid(tpr, fpr))


def pr_curve(scores, labels):
    """Precision-recall points over the descending threshold sweep."""
    scores, labels = _validate(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    distinct = np.flatnonzero(np.diff(s)) if s.size > 1 else np.array([], dtype=int)
    cut = np.concatenate([distinct, [s.size - 1]])
    tp = np.cumsum(y)[cut]
    predicted = cut + 1.0
    precision = tp / predicted
    recall = tp / labels.sum()
    thresholds = s[cut]
    return thresholds, recall, precision


def pr_auc(scores, labels):
    """Step-interpolated area: sum of precision * recall increments."""
    _, recall, precision = pr_curve(scores, labels)
    r_prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - r_prev) * precision))


def youden_threshold(scores, labels):
    """Threshold maximizing TPR - FPR (ties to the higher threshold)."""
    thresholds, fpr, tpr = roc_curve(scores, labels)
    j = tpr - fpr
    best = int(np.argmax(j))
    if not np.isfinite(thresholds[best]):
        best = 1 if len(thresholds) > 1 else 0
    return float(thresholds[best])


def threshold_band(scores, labels, min_tpr=0.85, max_fpr=0.10):
    """Range of thresholds meeting both operating targets, or None.

    Mirrors reporting a workable detector threshold range instead of a
    single point.
    """
    scores, labels = _validate(scores, labels)
    candidates = np.unique(scores)
    ok = []
    for t in candidates:
        dec = scores >= t
        tpr = float(dec[labels].mean())
        fpr = float(dec[~labels].mean())
        if tpr >= min_tpr and fpr <= max_fpr:
            ok.append(float(t))
    if not ok:
        return None
    return (min(ok), max(ok))


@dataclass
class MetricsReport:
    """Model-level detection metrics for one detector run over a zoo."""

    scores: dict  # model_id -> suspicion score
    ground_truth: dict  # model_id -> bool (trojan)
    auc: float
    pr_auc_value: float
    roc_points: list  # (threshold, fpr, tpr)
    pr_points: list  # (threshold, recall, precision)
    decisions: dict = field(default_factory=dict)  # model_id -> bool at chosen threshold
    chosen_threshold: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def confusion(self):
        if not self.decisions:
            return None
        tp = fp = tn = fn = 0
        for mid, dec in self.decisions.items():
            truth = self.ground_truth[mid]
            tp += dec and truth
            fp += dec and not truth
            tn += (not dec) and not truth
            fn += (not dec) and truth
        return {"tp": tp, "fp": fp, "tn": tn, "fn": fn}

    def to_dict(self):
        d = {
            "auc": self.auc,
            "pr_auc": self.pr_auc_value,
            "scores": {k: float(v) for k, v in sorted(self.scores.items())},
            "ground_truth": {k: bool(v) for k, v in sorted(self.ground_truth.items())},
            "roc_points": [[float(a), float(b), float(c)] for a, b, c in self.roc_points],
            "pr_points": [[float(a), float(b), float(c)] for a, b, c in self.pr_points],
        }
        if self.decisions:
            d["decisions"] = {k: bool(v) for k, v in sorted(self.decisions.items())}
            d["confusion"] = self.confusion
        if self.chosen_threshold is not None:
            d["chosen_threshold"] = float(self.chosen_threshold)
        d.update(self.extras)
        return d


def build_metrics_report(scores_by_model, truth_by_model, threshold=None, extras=None):
    ids = sorted(scores_by_model)
    if set(ids) != set(truth_by_model):
        raise ConfigError("scores and ground truth cover different model sets")
    scores = np.array([scores_by_model[i] for i in ids])
    labels = np.array([bool(truth_by_model[i]) for i in ids])
    thr, fpr, tpr = roc_curve(scores, labels)
    pthr, recall, precision = pr_curve(scores, labels)
    decisions = {}
    if threshold is not None:
        decisions = {i: bool(scores_by_model[i] >= threshold) for i in ids}
    return MetricsReport(
        scores=dict(scores_by_model),
        ground_truth={i: bool(truth_by_model[i]) for i in ids},
        auc=roc_auc(scores, labels),
        pr_auc_value=pr_auc(scores, labels),
        roc_points=list(zip(thr.tolist(), fpr.tolist(), tpr.tolist())),
        pr_points=list(zip(pthr.tolist(), recall.tolist(), precision.tolist())),
        decisions=decisions,
        chosen_threshold=threshold,
        extras=extras or {},
    )

"""Data-limited detector: couples universal and per-image adversarial
perturbations, scores their representation similarity per candidate label,
and turns quantiles of those scores into a clean/trojan decision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..base import ParamsMixin, check_images, derive_seed
from ..errors import ConfigError
from ..nn.model import forward_batch, predict_batch, representation_batch
from ..solver.composite import SolverConfig, solve
from .problems import (
    PerImagePerturbationProblem,
    UniversalPerturbationProblem,
    hinged_margin,
    stamp_relaxed,
)

DEFAULT_LAMBDAS = (1e-4, 1e-3, 1e-2)


@dataclass
class ValidationSet:
    """Validation images partitioned by the model's own predictions: for
    each label k, the in-group (predicted k) and out-group (predicted
    anything else)."""

    images: np.ndarray
    predicted: np.ndarray
    num_classes: int

    def in_group(self, k):
        return np.flatnonzero(self.predicted == k)

    def out_group(self, k):
        return np.flatnonzero(self.predicted != k)


def build_validation_set(model, X):
    X = check_images(X, model.input_shape)
    predicted = predict_batch(model, X)
    return ValidationSet(X, predicted, model.num_classes)


def untargeted_universal_loss(model, m, delta, images_out, labels_out, images_in, label, tau):
    """Hinged attack-plus-retention loss of one shared perturbation.

    Returns (value, grad_m, grad_delta). ``images_out``/``labels_out`` hold
    samples predicted outside the candidate ``label`` together with their
    predicted labels; ``images_in`` holds samples predicted as the label
    (may be empty, dropping the retention term).
    """
    if tau < 0:
        raise ConfigError("tau must be >= 0")
    problem = UniversalPerturbationProblem(
        model, images_out, labels_out, images_in, label, tau, lam=0.0,
    )
    return problem._eval(m, delta)


@dataclass
class LabelPerturbations:
    """Solver outputs for one candidate label at one sparsity weight."""

    label: int
    lam: float
    universal: object  # PerturbationTuple
    per_image: object  # PerturbationTuple, batched over the out-group
    out_indices: np.ndarray
    fooling_rate: float
    flip_to_label_rate: float
    retention_rate: float
    target_reached: np.ndarray  # per out-group image
    scores: np.ndarray | None = None  # similarity scores over the out-group


def compute_universal_perturbation(model, valset, label, lam, tau, solver_config,
                                   seed=None):
    """Solve for the label's shared perturbation and its fooling/retention
    rates on the validation partitions."""
    out_idx = valset.out_group(label)
    if out_idx.size == 0:
        raise ConfigError(f"no validation samples predicted outside label {label}")
    in_idx = valset.in_group(label)
    X_out = valset.images[out_idx]
    y_out = valset.predicted[out_idx]
    X_in = valset.images[in_idx]
    problem = UniversalPerturbationProblem(model, X_out, y_out, X_in, label, tau, lam)
    cfg = solver_config if seed is None else _reseed(solver_config, seed)
    result = solve(problem, cfg)
    tup = result.best
    stamped_out = stamp_relaxed(tup.m, tup.delta, X_out)
    preds_out = predict_batch(model, stamped_out)
    fooling = float((preds_out != y_out).mean())
    flip_to_label = float((preds_out == label).mean())
    if X_in.shape[0]:
        preds_in = predict_batch(model, stamp_relaxed(tup.m, tup.delta, X_in))
        retention = float((preds_in == label).mean())
    else:
        retention = 1.0
    return tup, fooling, flip_to_label, retention


def compute_per_image_perturbations(model, images, label, lam, tau, solver_config,
                                    seed=None):
    """Solve the targeted problems for a batch of images at once (each image
    gets its own independent mask and pattern). Returns the batched tuple
    and a per-image flag for whether the target label was reached."""
    problem = PerImagePerturbationProblem(model, images, label, tau, lam)
    cfg = solver_config if seed is None else _reseed(solver_config, seed)
    result = solve(problem, cfg)
    tup = result.best
    preds = predict_batch(model, stamp_relaxed(tup.m, tup.delta, images))
    return tup, preds == label


def _reseed(cfg, seed):
    params = cfg.get_params(deep=False)
    params["seed"] = seed
    return SolverConfig(**params)


def cosine_similarity(a, b):
    """Row-wise cosine; zero-norm rows score 0 (maximally non-suspicious)."""
    num = (a * b).sum(axis=-1)
    den = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    out = np.zeros_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def similarity_scores(model, valset, label, universal, per_image, out_indices):
    """Cosine similarity between representations of each out-group image
    perturbed by the shared tuple and by its own per-image tuple."""
    X = valset.images[out_indices]
    rep_u = representation_batch(model, stamp_relaxed(universal.m, universal.delta, X))
    rep_s = representation_batch(model, stamp_relaxed(per_image.m, per_image.delta, X))
    return cosine_similarity(rep_u, rep_s)


def detection_index(scores, q):
    """Linear-interpolation percentile of the similarity scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ConfigError("cannot take a percentile of an empty score vector")
    if not (0.0 < q < 100.0):
        raise ConfigError("quantile level must lie in (0, 100)")
    return float(np.percentile(scores, q, method="linear"))


@dataclass
class DLDetectionResult:
    indices: np.ndarray  # per-label detection index
    is_trojan: bool
    target_labels: list
    rule: str
    params: dict = field(default_factory=dict)
    anomaly_scores: np.ndarray | None = None

    def to_dict(self):
        d = {
            "rule": self.rule,
            "per_label": [
                {"label": int(k), "index": float(v)} for k, v in enumerate(self.indices)
            ],
            "decision": "trojan" if self.is_trojan else "clean",
            "targets": [int(t) for t in self.target_labels],
        }
        d.update(self.params)
        if self.anomaly_scores is not None:
            d["anomaly_scores"] = [float(a) for a in self.anomaly_scores]
        return d


def decide_threshold(indices, threshold):
    """Trojan iff any per-label index reaches the threshold; every such
    label is reported (models may carry several targets)."""
    if not (-1.0 <= threshold <= 1.0):
        raise ConfigError("threshold for similarity indices must lie in [-1, 1]")
    indices = np.asarray(indices, dtype=np.float64)
    targets = [int(k) for k in np.flatnonzero(indices >= threshold)]
    return DLDetectionResult(
        indices=indices, is_trojan=bool(targets), target_labels=targets,
        rule="threshold", params={"T1": float(threshold)},
    )


MAD_SCALE = 1.4826
MAD_CUTOFF = 2.0
_MAD_DEGENERATE_TOL = 1e-6


def decide_mad(indices):
    """Median-absolute-deviation outlier rule over the per-label indices.

    A label is flagged when its scaled deviation above the median exceeds
    2. With zero dispersion the rule falls back to flagging labels strictly
    above the median by more than a tiny tolerance (a strict outlier under
    zero spread is the strongest possible anomaly); otherwise zero-spread
    vectors are clean.
    """
    indices = np.asarray(indices, dtype=np.float64)
    if indices.size < 3:
        raise ConfigError("MAD rule needs at least 3 labels")
    med = np.median(indices)
    abs_dev = np.abs(indices - med)
    mad = np.median(abs_dev)
    if mad == 0.0:
        flagged = np.flatnonzero(indices - med > _MAD_DEGENERATE_TOL)
        scores = np.where(indices - med > _MAD_DEGENERATE_TOL, np.inf, 0.0)
    else:
        scores = abs_dev / (MAD_SCALE * mad)
        flagged = np.flatnonzero((scores > MAD_CUTOFF) & (indices > med))
    targets = [int(k) for k in flagged]
    return DLDetectionResult(
        indices=indices, is_trojan=bool(targets), target_labels=targets,
        rule="mad", params={"cutoff": MAD_CUTOFF}, anomaly_scores=scores,
    )


class DataLimitedDetector(ParamsMixin):
    """Detector needing a few clean validation images (about one per class).

    For every candidate label and every sparsity weight in ``lambdas`` it
    solves one universal and a batch of per-image perturbation problems,
    scores representation similarity, and takes the ``quantile`` of the
    scores; the per-label index is the max over the sweep (the most
    suspicious evidence wins). ``fit(model, X)`` stores per-label indices
    and the decision; the model's provenance is never consulted.
    """

    def __init__(self, lambdas=DEFAULT_LAMBDAS, quantile=50.0, threshold=0.7,
                 rule="threshold", tau=0.0, solver=None, seed=0):
        self.lambdas = lambdas
        self.quantile = quantile
        self.threshold = threshold
        self.rule = rule
        self.tau = tau
        self.solver = solver
        self.seed = seed

    def _solver_config(self):
        if self.solver is not None:
            return self.solver
        return SolverConfig(iterations=150, lr=0.02, lr_delta_scale=255.0)

    def fit(self, model, X):
        if self.rule not in ("threshold", "mad"):
            raise ConfigError(f"unknown decision rule {self.rule!r}")
        valset = build_validation_set(model, X)
        cfg = self._solver_config()
        K = model.num_classes
        indices = np.full(K, -1.0)
        scores_by_label = {}
        detail = []
        for lam in self.lambdas:
            for k in range(K):
                if valset.out_group(k).size == 0:
                    continue
                run_seed = derive_seed(self.seed, "dl", lam, k)
                universal, fooling, flip_rate, retention = compute_universal_perturbation(
                    model, valset, k, lam, self.tau, cfg, seed=run_seed,
                )
                out_idx = valset.out_group(k)
                per_image, reached = compute_per_image_perturbations(
                    model, valset.images[out_idx], k, lam, self.tau, cfg,
                    seed=derive_seed(run_seed, "per-image"),
                )
                scores = similarity_scores(model, valset, k, universal, per_image, out_idx)
                idx = detection_index(scores, self.quantile)
                detail.append(LabelPerturbations(
                    label=k, lam=lam, universal=universal, per_image=per_image,
                    out_indices=out_idx, fooling_rate=fooling,
                    flip_to_label_rate=flip_rate, retention_rate=retention,
                    target_reached=reached, scores=scores,
                ))
                if idx > indices[k]:
                    indices[k] = idx
                    scores_by_label[k] = scores
        self.indices_ = indices
        self.scores_ = scores_by_label
        self.perturbations_ = detail
        if self.rule == "mad":
            result = decide_mad(indices)
        else:
            result = decide_threshold(indices, self.threshold)
        result.params.update({
            "quantile": float(self.quantile),
            "lambda_sweep": [float(l) for l in self.lambdas],
            "tau": float(self.tau),
        })
        self.result_ = result
        self.is_trojan_ = result.is_trojan
        self.target_labels_ = result.target_labels
        self.suspicion_ = float(indices.max())
        return self

    def indices_at_quantile(self, q):
        """Per-label indices recomputed at another quantile level from the
        scores collected by the last ``fit`` (max over the lambda sweep)."""
        out = np.full(len(self.indices_), -1.0)
        for lp in self.perturbations_:
            out[lp.label] = max(out[lp.label], detection_index(lp.scores, q))
        return out

    def decision_function(self, model, X):
        """Model-level suspicion score: the largest per-label index."""
        self.fit(model, X)
        return self.suspicion_

    def predict(self, model, X):
        self.fit(model, X)
        return self.is_trojan_

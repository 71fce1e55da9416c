"""Data-free detector: feature inversion from arbitrary seed images (clean
samples or plain noise), scored by how much each class logit rises on the
recovered images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..base import ParamsMixin, check_images, derive_seed
from ..errors import ConfigError, ShapeMismatchError
from ..nn.model import forward_batch, logits_batch
from ..solver.composite import SolverConfig, solve
from .problems import ActivationInversionProblem, stamp_relaxed

DEFAULT_LAMBDA = 1e-4


@dataclass
class SeedBatch:
    images: np.ndarray  # (N, C, H, W)
    source: str  # "clean" | "noise"
    seed: int = 0

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[0] < 1:
            raise ShapeMismatchError("seed batch must be a non-empty (N, C, H, W) array")


def noise_seeds(input_shape, n, seed):
    """Uniform-random pixel images in [0, 255]."""
    if n < 1:
        raise ConfigError("need at least one seed image")
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.0, 255.0, size=(n,) + tuple(input_shape))
    return SeedBatch(images, "noise", seed)


def clean_seeds(images, n, seed):
    """Sample n seed images from a pool of clean images."""
    images = np.asarray(images, dtype=np.float64)
    if n < 1 or images.shape[0] < n:
        raise ConfigError(f"need {n} clean seeds but pool holds {images.shape[0]}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(images.shape[0], size=n, replace=False)
    return SeedBatch(images[np.sort(idx)].copy(), "clean", seed)


@dataclass
class InversionResult:
    """Per-seed recovered perturbations from one inversion solve."""

    seeds: np.ndarray  # (N, C, H, W) original inputs
    m: np.ndarray  # (N, C, H, W)
    delta: np.ndarray  # (N, C, H, W)
    w: np.ndarray | None  # (N, d)
    activation_trace: np.ndarray  # maximized objective per iteration
    refined: bool = False

    @property
    def recovered(self):
        return stamp_relaxed(self.m, self.delta, self.seeds)

    @property
    def perturbation(self):
        return self.recovered - self.seeds


def invert_input(model, seeds, lam, solver_config, seed=None):
    """Solve the weighted activation-maximization problem for each seed
    image (independent mask/pattern/weights per seed, one batched solve)."""
    X = check_images(seeds, model.input_shape, name="seeds")
    problem = ActivationInversionProblem(model, X, lam)
    cfg = solver_config
    if seed is not None:
        params = cfg.get_params(deep=False)
        params["seed"] = seed
        cfg = SolverConfig(**params)
    result = solve(problem, cfg)
    tup = result.best
    # solver traces the minimization objective; report the maximized one
    activation_trace = -result.objective_trace
    return InversionResult(
        seeds=X, m=tup.m, delta=tup.delta, w=tup.w, activation_trace=activation_trace,
    )


def logit_increase(model, seeds, inversion):
    """Average per-class logit change from seed to recovered image."""
    X = np.asarray(seeds, dtype=np.float64)
    recovered = inversion.recovered
    if recovered.shape != X.shape:
        raise ShapeMismatchError(
            f"{recovered.shape[0]} inversions for {X.shape[0]} seeds"
        )
    before = logits_batch(model, X)
    after = logits_batch(model, recovered)
    return (after - before).mean(axis=0)


@dataclass
class DFDetectionResult:
    logit_increases: np.ndarray
    is_trojan: bool
    target_labels: list
    threshold: float
    seed_source: str
    refined: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "rule": "logit-increase",
            "per_label": [
                {"label": int(k), "logit_increase": float(v)}
                for k, v in enumerate(self.logit_increases)
            ],
            "decision": "trojan" if self.is_trojan else "clean",
            "targets": [int(t) for t in self.target_labels],
            "T2": float(self.threshold),
            "seed_source": self.seed_source,
            "refined": self.refined,
        }
        d.update(self.params)
        return d


def decide(logit_increases, threshold, seed_source="noise", refined=False):
    """Trojan iff the largest per-label logit increase reaches the
    threshold; all qualifying labels are reported."""
    if not np.isfinite(threshold):
        raise ConfigError("threshold must be finite")
    L = np.asarray(logit_increases, dtype=np.float64)
    targets = [int(k) for k in np.flatnonzero(L >= threshold)]
    return DFDetectionResult(
        logit_increases=L, is_trojan=bool(targets), target_labels=targets,
        threshold=float(threshold), seed_source=seed_source, refined=refined,
    )


def refine(model, inversion, lam, solver_config, seed=None):
    """Re-solve each seed's inversion with the weight vector frozen to the
    coordinate that responded most strongly in the base solution."""
    rep = forward_batch(model, inversion.recovered).representation
    coords = np.argmax(rep, axis=1)
    problem = ActivationInversionProblem(model, inversion.seeds, lam, fixed_coords=coords)
    cfg = solver_config
    if seed is not None:
        params = cfg.get_params(deep=False)
        params["seed"] = seed
        cfg = SolverConfig(**params)
    result = solve(problem, cfg)
    tup = result.best
    onehot = np.zeros((inversion.seeds.shape[0], model.penultimate_dim))
    onehot[np.arange(inversion.seeds.shape[0]), coords] = 1.0
    return InversionResult(
        seeds=inversion.seeds, m=tup.m, delta=tup.delta, w=onehot,
        activation_trace=-result.objective_trace, refined=True,
    )


def perturbation_mass_fraction(inversion, bounding_box):
    """Per-seed fraction of the perturbation's l1 mass falling inside a
    (row0, row1, col0, col1) box, and the box's share of the image area.

    Quantitative proxy for trigger recovery: on backdoored models the mass
    should concentrate in the true trigger box well above the area share.
    """
    r0, r1, c0, c1 = bounding_box
    pert = np.abs(inversion.perturbation)
    total = pert.sum(axis=(1, 2, 3))
    inside = pert[:, :, r0:r1, c0:c1].sum(axis=(1, 2, 3))
    h, w = pert.shape[2], pert.shape[3]
    area_share = ((r1 - r0) * (c1 - c0)) / float(h * w)
    fractions = np.where(total > 0, inside / np.maximum(total, 1e-300), 0.0)
    return fractions, area_share


class DataFreeDetector(ParamsMixin):
    """Detector that needs no data at all: seeds are random noise unless a
    clean pool is supplied. ``fit(model, X=None)`` inverts ``n_seeds`` seed
    images, stores the per-label logit increases, and thresholds their max.
    """

    def __init__(self, n_seeds=10, seed_source="noise", lam=DEFAULT_LAMBDA,
                 threshold=20.0, refine_pass=False, solver=None, seed=0):
        self.n_seeds = n_seeds
        self.seed_source = seed_source
        self.lam = lam
        self.threshold = threshold
        self.refine_pass = refine_pass
        self.solver = solver
        self.seed = seed

    def _solver_config(self):
        if self.solver is not None:
            return self.solver
        return SolverConfig(iterations=400, lr=0.02, lr_delta_scale=255.0,
                            lr_w_scale=0.02)

    def make_seeds(self, model, X=None):
        if self.seed_source == "noise":
            return noise_seeds(model.input_shape, self.n_seeds, derive_seed(self.seed, "noise"))
        if self.seed_source == "clean":
            if X is None:
                raise ConfigError("seed_source='clean' needs a pool of images")
            return clean_seeds(X, self.n_seeds, derive_seed(self.seed, "clean"))
        raise ConfigError(f"unknown seed_source {self.seed_source!r}")

    def fit(self, model, X=None):
        batch = self.make_seeds(model, X)
        cfg = self._solver_config()
        inversion = invert_input(model, batch.images, self.lam, cfg,
                                 seed=derive_seed(self.seed, "invert"))
        if self.refine_pass:
            inversion = refine(model, inversion, self.lam, cfg,
                               seed=derive_seed(self.seed, "refine"))
        L = logit_increase(model, batch.images, inversion)
        result = decide(L, self.threshold, seed_source=batch.source,
                        refined=inversion.refined)
        result.params.update({"n_seeds": int(self.n_seeds), "lambda": float(self.lam)})
        self.seed_batch_ = batch
        self.inversion_ = inversion
        self.logit_increases_ = L
        self.result_ = result
        self.is_trojan_ = result.is_trojan
        self.target_labels_ = result.target_labels
        self.suspicion_ = float(L.max())
        return self

    def decision_function(self, model, X=None):
        """Model-level suspicion score: the largest per-label logit increase."""
        self.fit(model, X)
        return self.suspicion_

    def predict(self, model, X=None):
        self.fit(model, X)
        return self.is_trojan_

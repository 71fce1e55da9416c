"""Trigger-driven dataset poisoning and attack validity measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..nn.model import predict_batch
from .synthetic import DatasetBundle
from .triggers import TriggerSpec, stamp


@dataclass(frozen=True)
class PoisonConfig:
    trigger: TriggerSpec
    target_label: int
    poison_ratio: float
    allow_target_poison: bool = False

    def __post_init__(self):
        if not (0.0 < self.poison_ratio < 1.0):
            raise ConfigError("poison_ratio must lie strictly in (0, 1)")
        if self.target_label < 0:
            raise ConfigError("target_label must be non-negative")


def poison_dataset(ds: DatasetBundle, cfg: PoisonConfig, seed) -> DatasetBundle:
    """Stamp and relabel a seeded uniform selection of samples in place.

    Exactly round(poison_ratio * N) samples are poisoned. Samples already in
    the target class are excluded from selection unless
    ``allow_target_poison`` is set (stamping them would not change their
    label, so they add nothing to the attack). The selected indices are
    recorded in the returned bundle's ``meta``.
    """
    if cfg.target_label >= ds.num_classes:
        raise ConfigError(f"target_label {cfg.target_label} outside [0, {ds.num_classes})")
    n = ds.images.shape[0]
    count = int(np.rint(cfg.poison_ratio * n))
    if count == 0:
        raise ConfigError(
            f"poison_ratio {cfg.poison_ratio} rounds to zero samples for n={n}"
        )
    if cfg.allow_target_poison:
        eligible = np.arange(n)
    else:
        eligible = np.flatnonzero(ds.labels != cfg.target_label)
    if count > eligible.size:
        raise ConfigError(
            f"cannot poison {count} samples: only {eligible.size} eligible "
            f"(non-target) samples available"
        )
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(eligible, size=count, replace=False))
    images = ds.images.copy()
    labels = ds.labels.copy()
    images[chosen] = stamp(images[chosen], cfg.trigger)
    labels[chosen] = cfg.target_label
    meta = dict(ds.meta)
    meta["poison"] = {
        "target_label": int(cfg.target_label),
        "poison_ratio": float(cfg.poison_ratio),
        "count": int(count),
        "indices": [int(i) for i in chosen],
        "trigger": cfg.trigger.to_dict(),
    }
    return DatasetBundle(images, labels, ds.num_classes, ds.split, ds.seed, meta)


def attack_success_rate(model, test: DatasetBundle, trigger: TriggerSpec, target) -> float:
    """Fraction of stamped non-target-class test images predicted as the
    target. Target-class samples are excluded before stamping."""
    eligible = np.flatnonzero(test.labels != target)
    if eligible.size == 0:
        raise ConfigError("no non-target samples to measure the attack on")
    stamped = stamp(test.images[eligible], trigger)
    preds = predict_batch(model, stamped)
    return float((preds == target).mean())

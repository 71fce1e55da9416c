"""Model-zoo construction: train a population of clean and backdoored
models with varied triggers, measure their validity (attack success and
clean-test accuracy), and persist everything under one manifest."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..base import derive_seed
from ..container import atomic_write_text, canonical_json
from ..data.poison import PoisonConfig, attack_success_rate, poison_dataset
from ..data.synthetic import generate_synthetic_dataset
from ..data.triggers import make_trigger, trigger_from_dict
from ..errors import ConfigError, FormatError, TrainingDivergedError
from ..nn.io import load_model, save_model
from ..nn.model import build_cnn
from ..nn.train import accuracy, train

MANIFEST_NAME = "manifest.json"

# Default trigger sweep: varied shapes, colors, and positions, all with
# 3x3 bounding boxes, screened to give valid backdoors (ASR ~1.0) on the
# synthetic classes.
DEFAULT_TRIGGERS = (
    {"shape": "square", "side": 3, "color": (0, 160, 255), "center": (2, 13)},
    {"shape": "triangle", "side": 3, "color": (0, 160, 255), "center": (12, 12)},
    {"shape": "square", "side": 3, "color": (30, 30, 200), "center": (12, 12)},
    {"shape": "cross", "side": 3, "color": (0, 200, 90), "center": (12, 12)},
    {"shape": "square", "side": 3, "color": (0, 200, 90), "center": (2, 13)},
    {"shape": "triangle", "side": 3, "color": (0, 200, 90), "center": (12, 12)},
    {"shape": "square", "side": 3, "color": (0, 230, 230), "center": (12, 12)},
    {"shape": "triangle", "side": 3, "color": (30, 30, 200), "center": (12, 12)},
)


@dataclass
class ZooConfig:
    num_clean: int = 10
    num_trojan: int = 10
    num_classes: int = 5
    image_shape: tuple = (3, 16, 16)
    train_per_class: int = 500
    test_per_class: int = 200
    epochs: int = 6
    learning_rate: float = 0.05
    batch_size: int = 64
    momentum: float = 0.9
    conv_channels: tuple = (8, 16)
    fc_width: int = 64
    kernel: int = 3
    poison_ratio: float = 0.1
    triggers: tuple = DEFAULT_TRIGGERS  # cycled over trojan members
    num_two_target: int = 0
    asr_floor: float = 0.95
    acc_gap_ceiling: float = 3.0  # percentage points below the clean mean
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["image_shape"] = list(self.image_shape)
        d["conv_channels"] = list(self.conv_channels)
        d["triggers"] = [
            {
                "shape": t["shape"], "side": int(t["side"]),
                "color": [float(c) for c in t["color"]],
                "center": [int(c) for c in t["center"]],
            }
            for t in self.triggers
        ]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown zoo config fields: {sorted(unknown)}")
        if "image_shape" in d:
            d["image_shape"] = tuple(d["image_shape"])
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        if "triggers" in d:
            d["triggers"] = tuple(
                {
                    "shape": t["shape"], "side": int(t["side"]),
                    "color": tuple(t["color"]), "center": tuple(t["center"]),
                }
                for t in d["triggers"]
            )
        return cls(**d)


def _trigger_for(cfg, index):
    spec = cfg.triggers[index % len(cfg.triggers)]
    return make_trigger(
        cfg.image_shape, shape=spec["shape"], center=tuple(spec["center"]),
        side=int(spec["side"]), color=tuple(spec["color"]),
    )


def _build_one(args):
    """Train one zoo member; fully seeded so pool scheduling cannot change
    the result. Returns (manifest entry, model or None)."""
    cfg, kind, index = args
    model_id = f"{kind}-{index:03d}"
    dataset_seed = derive_seed(cfg.seed, "dataset", kind, index)
    init_seed = derive_seed(cfg.seed, "init", kind, index)
    train_seed = derive_seed(cfg.seed, "train", kind, index)
    train_ds = generate_synthetic_dataset(
        cfg.num_classes, cfg.train_per_class, cfg.image_shape, seed=dataset_seed,
        split="train",
    )
    test_ds = generate_synthetic_dataset(
        cfg.num_classes, cfg.test_per_class, cfg.image_shape,
        seed=derive_seed(dataset_seed, "test"), split="test",
    )
    entry = {
        "model_id": model_id,
        "kind": kind,
        "dataset_seed": int(dataset_seed),
        "init_seed": int(init_seed),
        "train_seed": int(train_seed),
    }
    provenance = {"kind": "clean"}
    triggers = []
    if kind == "trojan":
        two_target = index < cfg.num_two_target
        n_triggers = 2 if two_target else 1
        targets = []
        for j in range(n_triggers):
            trig = _trigger_for(cfg, index * 2 + j if two_target else index)
            target = (index + j) % cfg.num_classes
            train_ds = poison_dataset(
                train_ds, PoisonConfig(trig, target, cfg.poison_ratio / n_triggers),
                seed=derive_seed(cfg.seed, "poison", index, j),
            )
            triggers.append(trig)
            targets.append(target)
        provenance = {
            "kind": "trojan",
            "targets": targets,
            "poison_ratio": cfg.poison_ratio,
            "triggers": [t.to_dict() for t in triggers],
        }
    base = build_cnn(
        cfg.image_shape, cfg.num_classes, conv_channels=tuple(cfg.conv_channels),
        fc_width=cfg.fc_width, kernel=cfg.kernel, seed=init_seed,
    )
    try:
        result = train(
            base, train_ds.images, train_ds.labels, cfg.epochs, cfg.learning_rate,
            train_seed, batch_size=cfg.batch_size, momentum=cfg.momentum,
            X_test=test_ds.images, y_test=test_ds.labels,
        )
    except TrainingDivergedError as e:
        entry.update({"status": "failed", "error": str(e)})
        return entry, None
    model = replace(result.model, provenance=provenance)
    entry["status"] = "ok"
    entry["test_accuracy"] = result.test_accuracy
    entry["train_accuracy"] = result.train_accuracy
    entry["provenance"] = provenance
    if kind == "trojan":
        rates = [
            attack_success_rate(model, test_ds, trig, target)
            for trig, target in zip(triggers, provenance["targets"])
        ]
        entry["attack_success_rate"] = min(rates)
        entry["attack_success_rates"] = rates
    return entry, model


def build_zoo(cfg: ZooConfig, out_dir, jobs=1):
    """Train and persist the zoo; returns the manifest dict.

    Trojan members whose attack success rate falls below ``asr_floor`` or
    whose clean-test accuracy trails the clean-model mean by more than
    ``acc_gap_ceiling`` points are kept on disk but flagged invalid, and
    excluded from experiments. Training failures are reported per model
    without aborting the build.
    """
    os.makedirs(os.path.join(out_dir, "models"), exist_ok=True)
    tasks = [(cfg, "clean", i) for i in range(cfg.num_clean)]
    tasks += [(cfg, "trojan", i) for i in range(cfg.num_trojan)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_build_one, tasks))
    else:
        outcomes = [_build_one(t) for t in tasks]
    entries = []
    for entry, model in outcomes:
        if model is not None:
            rel = os.path.join("models", f"{entry['model_id']}.tscp")
            save_model(model, os.path.join(out_dir, rel))
            entry["path"] = rel
        entries.append(entry)
    entries.sort(key=lambda e: e["model_id"])

    clean_accs = [
        e["test_accuracy"] for e in entries if e["kind"] == "clean" and e["status"] == "ok"
    ]
    clean_mean = float(np.mean(clean_accs)) if clean_accs else None
    for e in entries:
        if e["status"] != "ok":
            e["valid"] = False
            continue
        if e["kind"] == "clean":
            e["valid"] = True
            continue
        reasons = []
        if e["attack_success_rate"] < cfg.asr_floor:
            reasons.append(
                f"attack success rate {e['attack_success_rate']:.3f} < floor {cfg.asr_floor}"
            )
        if clean_mean is not None:
            gap = (clean_mean - e["test_accuracy"]) * 100.0
            e["accuracy_gap_points"] = gap
            if gap > cfg.acc_gap_ceiling:
                reasons.append(
                    f"accuracy gap {gap:.2f} points > ceiling {cfg.acc_gap_ceiling}"
                )
        e["valid"] = not reasons
        if reasons:
            e["invalid_reasons"] = reasons
    manifest = {
        "manifest_version": 1,
        "config": cfg.to_dict(),
        "clean_test_accuracy_mean": clean_mean,
        "models": entries,
    }
    manifest["manifest_hash"] = manifest_hash(manifest)
    atomic_write_text(os.path.join(out_dir, MANIFEST_NAME), canonical_json(manifest))
    return manifest


def manifest_hash(manifest):
    """Hash of the manifest content, ignoring volatile fields."""
    stripped = {k: v for k, v in manifest.items() if k not in ("manifest_hash", "created_at")}
    return hashlib.sha256(canonical_json(stripped).encode("utf-8")).hexdigest()


def load_manifest(zoo_dir):
    path = os.path.join(zoo_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise FormatError(f"no {MANIFEST_NAME} in {zoo_dir}")
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    return manifest


def load_zoo_model(zoo_dir, entry):
    return load_model(os.path.join(zoo_dir, entry["path"]))


def zoo_entries(manifest, valid_only=True):
    for e in manifest["models"]:
        if valid_only and not e.get("valid"):
            continue
        yield e


def validate_zoo(zoo_dir, manifest=None):
    """Recheck persisted models against their manifest entries: reload each
    model, re-measure test accuracy and (for trojans) attack success rate,
    and confirm the manifest hash. Returns a report dict."""
    manifest = manifest or load_manifest(zoo_dir)
    cfg = ZooConfig.from_dict(manifest["config"])
    report = {"models": [], "hash_ok": manifest_hash(manifest) == manifest.get("manifest_hash")}
    for e in zoo_entries(manifest, valid_only=False):
        if e["status"] != "ok":
            report["models"].append({"model_id": e["model_id"], "status": e["status"]})
            continue
        model = load_zoo_model(zoo_dir, e)
        test_ds = generate_synthetic_dataset(
            cfg.num_classes, cfg.test_per_class, cfg.image_shape,
            seed=derive_seed(e["dataset_seed"], "test"), split="test",
        )
        acc = accuracy(model, test_ds.images, test_ds.labels)
        row = {
            "model_id": e["model_id"],
            "test_accuracy": acc,
            "accuracy_matches": abs(acc - e["test_accuracy"]) < 1e-9,
        }
        if e["kind"] == "trojan":
            rates = []
            for t_dict, target in zip(e["provenance"]["triggers"], e["provenance"]["targets"]):
                trig = trigger_from_dict(t_dict, cfg.image_shape)
                rates.append(attack_success_rate(model, test_ds, trig, target))
            row["attack_success_rate"] = min(rates)
            row["asr_matches"] = abs(min(rates) - e["attack_success_rate"]) < 1e-9
        report["models"].append(row)
    report["all_ok"] = report["hash_ok"] and all(
        r.get("accuracy_matches", True) and r.get("asr_matches", True)
        for r in report["models"]
    )
    return report

"""Synthetic image classification data: small geometric archetypes with
per-sample jitter and noise, distinct enough that both a nearest-centroid
rule and a small CNN separate the classes comfortably."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

from ..container import read_container, write_container
from ..errors import ConfigError, FormatError

_MARGIN = 4
_ARCHETYPES = ("ring", "bars", "checker", "diagonal", "blob")


@dataclass
class DatasetBundle:
    images: np.ndarray  # (N, C, H, W) float64 in [0, 255]
    labels: np.ndarray  # (N,) int64
    num_classes: int
    split: str = "train"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ConfigError("images and labels disagree on sample count")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ConfigError(f"labels must lie in [0, {self.num_classes})")

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, indices, split=None):
        return DatasetBundle(
            self.images[indices].copy(), self.labels[indices].copy(),
            self.num_classes, split or self.split, self.seed, dict(self.meta),
        )


_SHARED_COLOR = np.array([150.0, 160.0, 135.0])


def _class_tone(k):
    """All classes share one palette; class identity is carried by the
    spatial arrangement alone, so no small pixel patch gives strong class
    evidence and a tiny stamp cannot impersonate a class."""
    return _SHARED_COLOR * (1.0 + 0.03 * (k % 3))


def _draw_archetype(kind, h, w, dy, dx, grow):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2 + dy, (w - 1) / 2 + dx
    span = min(h, w) - 2 * _MARGIN  # drawable extent, keeps borders clear
    pat = np.zeros((h, w))
    # support masses are kept comparable (~30 pixels at 16x16) so no class
    # is intrinsically cheaper to fake than the others
    if kind == "ring":
        r = np.hypot(yy - cy, xx - cx)
        r0 = span / 2 - 0.5 + grow
        pat[(r >= r0 - 0.8) & (r <= r0 + 0.8)] = 1.0
    elif kind == "bars":
        off = span // 2 + 1 + grow
        inside_rows = np.abs(yy - cy) <= span / 2 + 1
        for c in (int(cx - off), int(cx), int(cx + off)):
            col = (np.abs(xx - c) <= 0.5) & inside_rows
            pat[col] = 1.0
    elif kind == "checker":
        cell = 3 + grow
        inside = (np.abs(yy - cy) <= span / 2 - 0.5) & (np.abs(xx - cx) <= span / 2 - 0.5)
        parity = (((yy - dy) // cell) + ((xx - dx) // cell)) % 2 == 0
        pat[inside & parity] = 1.0
    elif kind == "diagonal":
        inside = (np.abs(yy - cy) <= span / 2 + 1) & (np.abs(xx - cx) <= span / 2 + 1)
        for off in (-span // 2, 0, span // 2):
            d = np.abs((yy - cy) - (xx - cx) + off)
            pat[inside & (d <= 0.6 + 0.3 * grow)] = 1.0
    elif kind == "blob":
        r = np.hypot(yy - cy, xx - cx)
        pat[r <= span / 2.6 + grow] = 1.0
    return pat


def generate_synthetic_dataset(num_classes, per_class, image_shape=(3, 16, 16), seed=0,
                               split="train", noise_sigma=18.0, jitter=1):
    """Deterministically generate ``per_class`` samples for each of
    ``num_classes`` geometric classes."""
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if per_class < 1:
        raise ConfigError("per_class must be >= 1; an empty dataset is not useful")
    c, h, w = image_shape
    if h < 12 or w < 12:
        raise ConfigError(f"images must be at least 12x12 to fit the archetypes, got {h}x{w}")
    if c != 3:
        raise ConfigError("synthetic generator draws 3-channel images")
    rng = np.random.default_rng(seed)
    n = num_classes * per_class
    images = np.empty((n, c, h, w))
    labels = np.repeat(np.arange(num_classes), per_class)
    background = 24.0
    for i, k in enumerate(labels):
        kind = _ARCHETYPES[k % len(_ARCHETYPES)]
        grow = k // len(_ARCHETYPES)
        dy, dx = rng.integers(-jitter, jitter + 1, size=2)
        pat = _draw_archetype(kind, h, w, float(dy), float(dx), grow)
        brightness = rng.uniform(0.8, 1.2)
        img = background + _class_tone(int(k))[:, None, None] * pat[None] * brightness
        img += rng.normal(0.0, noise_sigma, size=(c, h, w))
        images[i] = np.clip(img, 0.0, 255.0)
    order = rng.permutation(n)
    return DatasetBundle(images[order], labels[order], num_classes, split, seed)


def save_dataset(ds: DatasetBundle, path):
    header = {
        "kind": "dataset",
        "num_classes": ds.num_classes,
        "split": ds.split,
        "seed": ds.seed,
        "meta": ds.meta,
    }
    blocks = [("images", ds.images), ("labels", ds.labels.astype(np.float64))]
    write_container(path, header, blocks)


def load_dataset(path) -> DatasetBundle:
    header, arrays = read_container(path)
    if header.get("kind") != "dataset":
        raise FormatError(f"{path}: container holds {header.get('kind')!r}, not a dataset")
    return DatasetBundle(
        arrays["images"], arrays["labels"].astype(np.int64),
        int(header["num_classes"]), header.get("split", "train"),
        int(header.get("seed", 0)), header.get("meta", {}),
    )

"""Trigger stamps: binary masks plus pixel patterns placed onto images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeMismatchError

TRIGGER_SHAPES = ("dot", "cross", "triangle", "square", "watermark")


@dataclass(frozen=True)
class TriggerSpec:
    """Stamp definition: where (binary mask) and what (pattern in [0,255])."""

    mask: np.ndarray  # (C, H, W), entries in {0, 1}
    pattern: np.ndarray  # (C, H, W), entries in [0, 255]
    shape: str = "square"
    center: tuple = (0, 0)
    side: int = 1
    color: tuple = (255.0, 255.0, 255.0)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=np.float64)
        pattern = np.asarray(self.pattern, dtype=np.float64)
        if mask.shape != pattern.shape:
            raise ShapeMismatchError(
                f"mask shape {mask.shape} != pattern shape {pattern.shape}"
            )
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ConfigError("trigger mask entries must be 0 or 1")
        if pattern.min() < 0 or pattern.max() > 255:
            raise ConfigError("trigger pattern entries must lie in [0, 255]")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "pattern", pattern)

    def bounding_box(self):
        """(row0, row1, col0, col1) half-open bounds of the mask support."""
        support = self.mask.any(axis=0)
        rows = np.flatnonzero(support.any(axis=1))
        cols = np.flatnonzero(support.any(axis=0))
        if rows.size == 0:
            return (0, 0, 0, 0)
        return (int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1)

    def to_dict(self):
        box = self.bounding_box()
        return {
            "shape": self.shape,
            "center": list(self.center),
            "side": int(self.side),
            "color": [float(c) for c in self.color],
            "bounding_box": list(box),
            "support_pixels": int(self.mask.any(axis=0).sum()),
        }


def _spatial_mask(shape, image_hw, center, side):
    h, w = image_hw
    r0, c0 = center
    m = np.zeros((h, w))
    if shape == "dot" or shape == "square":
        half = side // 2
        rr = slice(max(r0 - half, 0), min(r0 - half + side, h))
        cc = slice(max(c0 - half, 0), min(c0 - half + side, w))
        m[rr, cc] = 1.0
    elif shape == "cross":
        half = side // 2
        m[max(r0 - half, 0) : min(r0 + half + 1, h), c0] = 1.0
        m[r0, max(c0 - half, 0) : min(c0 + half + 1, w)] = 1.0
    elif shape == "triangle":
        # lower-left right triangle with legs of length `side`
        for i in range(side):
            r = r0 - side // 2 + i
            if 0 <= r < h:
                c1 = max(c0 - side // 2, 0)
                c2 = min(c0 - side // 2 + i + 1, w)
                m[r, c1:c2] = 1.0
    elif shape == "watermark":
        # full-image sparse lattice standing in for low-alpha watermarks
        m[::3, ::3] = 1.0
    else:
        raise ConfigError(f"unknown trigger shape {shape!r}; choose from {TRIGGER_SHAPES}")
    return m


def make_trigger(image_shape, shape="square", center=None, side=3, color=(255.0, 255.0, 255.0)):
    """Build a TriggerSpec for (C, H, W) images.

    The mask support is clipped to the image bounds; the pattern is the
    given solid color on the full canvas (only masked pixels matter).
    """
    c, h, w = image_shape
    if center is None:
        center = (h - 1 - side // 2 - 1, w - 1 - side // 2 - 1)
    spatial = _spatial_mask(shape, (h, w), center, side)
    if spatial.sum() == 0:
        raise ConfigError("trigger mask support is empty; center/side out of bounds")
    mask = np.broadcast_to(spatial, (c, h, w)).copy()
    color = np.asarray(color, dtype=np.float64)
    if color.shape != (c,):
        raise ShapeMismatchError(f"color needs {c} channels, got {color.shape}")
    pattern = np.broadcast_to(color[:, None, None], (c, h, w)).copy()
    return TriggerSpec(mask, pattern, shape=shape, center=tuple(center), side=side,
                       color=tuple(float(x) for x in color))


def stamp(x, trigger):
    """Place the trigger: (1 - m) * x + m * pattern, elementwise.

    Accepts a single (C, H, W) image or an (N, C, H, W) batch. Pixels
    outside the mask support are returned bit-identical.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-3:] != trigger.mask.shape:
        raise ShapeMismatchError(
            f"image shape {x.shape} incompatible with trigger shape {trigger.mask.shape}"
        )
    return (1.0 - trigger.mask) * x + trigger.mask * trigger.pattern


def trigger_from_dict(d, image_shape):
    return make_trigger(
        image_shape,
        shape=d["shape"],
        center=tuple(d["center"]),
        side=int(d["side"]),
        color=tuple(d["color"]),
    )

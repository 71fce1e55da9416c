"""Export inversion outputs for inspection: 8-bit PNGs plus exact float64
dumps (.npy) for downstream analysis."""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from ..container import atomic_write_text


def to_uint8(image):
    """(C, H, W) float -> (H, W, C) uint8 with per-channel clamp to [0, 255]."""
    arr = np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0.0, 255.0)
    return arr.astype(np.uint8).transpose(1, 2, 0)


def save_png(image, path):
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def export_inversion(inversion, out_dir, logit_increases=None, prefix="seed"):
    """Write per-seed seed/recovered/perturbation PNGs, raw arrays, and a
    JSON summary. Returns the list of files written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    recovered = inversion.recovered
    pert = np.abs(inversion.perturbation)
    for i in range(inversion.seeds.shape[0]):
        for tag, img in (
            ("input", inversion.seeds[i]),
            ("recovered", recovered[i]),
            ("perturbation", pert[i]),
        ):
            path = os.path.join(out_dir, f"{prefix}{i:02d}_{tag}.png")
            save_png(img, path)
            written.append(path)
    for name, arr in (
        ("seeds", inversion.seeds), ("mask", inversion.m),
        ("pattern", inversion.delta), ("recovered", recovered),
    ):
        path = os.path.join(out_dir, f"{name}.npy")
        np.save(path, arr)
        written.append(path)
    if inversion.w is not None:
        path = os.path.join(out_dir, "weights.npy")
        np.save(path, inversion.w)
        written.append(path)
    summary = {
        "n_seeds": int(inversion.seeds.shape[0]),
        "refined": bool(inversion.refined),
        "final_activation": float(inversion.activation_trace[-1]),
        "mask_l1_per_seed": [float(v) for v in np.abs(inversion.m).sum(axis=(1, 2, 3))],
    }
    if logit_increases is not None:
        summary["logit_increases"] = [float(v) for v in logit_increases]
    path = os.path.join(out_dir, "summary.json")
    atomic_write_text(path, json.dumps(summary, sort_keys=True, indent=2))
    written.append(path)
    return written

"""Model file save/load on top of the shared container format."""

from __future__ import annotations

from ..container import read_container, write_container
from ..errors import FormatError
from .model import ModelBundle, model_from_header


def save_model(model: ModelBundle, path):
    blocks = []
    for i, params in enumerate(model.weights):
        for name in sorted(params):
            blocks.append((f"layer{i}.{name}", params[name]))
    header = model.to_header()
    header["kind"] = "model"
    write_container(path, header, blocks)


def load_model(path) -> ModelBundle:
    header, arrays = read_container(path)
    if header.get("kind") != "model":
        raise FormatError(f"{path}: container holds {header.get('kind')!r}, not a model")
    weights = []
    for i, _ in enumerate(header["layers"]):
        prefix = f"layer{i}."
        params = {
            name[len(prefix) :]: arrays[name] for name in arrays if name.startswith(prefix)
        }
        weights.append(params)
    return model_from_header(header, weights)

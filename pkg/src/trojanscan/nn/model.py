"""Model container, forward evaluation, and reverse-mode input gradients.

A model is an immutable stack of layers plus per-layer weights. Forward
evaluation exposes both the class logits and the penultimate representation
(the post-activation input of the final fully-connected layer); backward
evaluation accepts cotangents for either output, which is all the detector
objectives need.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from ..base import check_images
from ..errors import NumericalError, ShapeMismatchError
from .layers import Conv2D, Dense, Flatten, MaxPool2x2, ReLU, layer_from_dict, layer_to_dict


@dataclass(frozen=True)
class ModelBundle:
    """Architecture + trained weights + classification metadata.

    ``provenance`` records how the model was produced (clean vs trojan with
    trigger details). Detectors must never look at it; the evaluation
    harness strips it before scoring and uses it only as ground truth.
    """

    layers: tuple
    weights: tuple  # one dict of arrays per layer, possibly empty
    input_shape: tuple  # (C, H, W)
    num_classes: int
    provenance: dict = field(default_factory=lambda: {"kind": "clean"})

    def __post_init__(self):
        shape = tuple(self.input_shape)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except ShapeMismatchError as e:
                raise ShapeMismatchError(f"layer {i} ({layer.kind}): {e}") from None
        if shape != (self.num_classes,):
            raise ShapeMismatchError(
                f"layer stack maps {tuple(self.input_shape)} to {shape}, "
                f"expected ({self.num_classes},) logits"
            )
        if self.layers[self._rep_layer_index()].kind != "dense":
            raise ShapeMismatchError("model must end in a fully-connected block")

    def _rep_layer_index(self):
        for i in range(len(self.layers) - 1, -1, -1):
            if self.layers[i].kind == "dense":
                return i
        raise ShapeMismatchError("model has no fully-connected layer")

    @property
    def penultimate_dim(self):
        return self.layers[self._rep_layer_index()].in_features

    def strip_provenance(self):
        """Copy of the bundle with ground-truth provenance withheld."""
        return replace(self, provenance={"kind": "undisclosed"})

    def copy_weights(self):
        return tuple({k: v.copy() for k, v in w.items()} for w in self.weights)

    def to_header(self):
        return {
            "layers": [layer_to_dict(l) for l in self.layers],
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "penultimate_dim": self.penultimate_dim,
            "provenance": self.provenance,
        }


@dataclass
class ForwardTrace:
    """One forward evaluation: logits, representation, and the per-layer
    caches needed to run the backward pass for the same inputs."""

    logits: np.ndarray  # (N, K)
    representation: np.ndarray  # (N, d)
    caches: list
    batch_shape: tuple


def build_cnn(input_shape, num_classes, conv_channels=(8, 16), fc_width=64, kernel=3, seed=0):
    """Small conv net: conv/relu/pool blocks, one hidden dense layer of
    ``fc_width`` units (the penultimate representation), dense classifier."""
    c, h, w = input_shape
    layers = []
    in_c = c
    scale = 1.0 / 255.0  # normalization lives inside the first layer
    for out_c in conv_channels:
        layers.append(Conv2D(in_c, out_c, kernel=kernel, padding="same", input_scale=scale))
        layers.append(ReLU())
        layers.append(MaxPool2x2())
        scale = 1.0
        h, w = h // 2, w // 2
        in_c = out_c
    layers.append(Flatten())
    flat = in_c * h * w
    layers.append(Dense(flat, fc_width))
    layers.append(ReLU())
    layers.append(Dense(fc_width, num_classes))
    rng = np.random.default_rng(seed)
    weights = tuple(l.init_params(rng) for l in layers)
    return ModelBundle(tuple(layers), weights, tuple(input_shape), num_classes)


def forward_batch(model, X):
    """Evaluate the network on a batch whose trailing dims match
    ``model.input_shape`` (images: (N, C, H, W)), keeping caches."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1:] != tuple(model.input_shape):
        raise ShapeMismatchError(
            f"input batch shape {X.shape} does not match model input {tuple(model.input_shape)}"
        )
    rep_idx = model._rep_layer_index()
    a = X
    caches = []
    representation = None
    for i, (layer, params) in enumerate(zip(model.layers, model.weights)):
        if i == rep_idx:
            representation = a
        try:
            a, cache = layer.forward(a, params)
        except ValueError as e:
            raise ShapeMismatchError(f"layer {i} ({layer.kind}): {e}") from None
        caches.append(cache)
    if not np.isfinite(a).all():
        raise NumericalError("forward pass produced non-finite logits")
    return ForwardTrace(logits=a, representation=representation, caches=caches, batch_shape=X.shape)


def forward(model, x):
    """Single-input forward pass; returns a trace with (1, K) logits and
    (1, d) representation."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != tuple(model.input_shape):
        raise ShapeMismatchError(
            f"input shape {x.shape} does not match model input {tuple(model.input_shape)}"
        )
    return forward_batch(model, x[None])


def backward_input(model, trace, d_logits, d_rep=None):
    """Backpropagate cotangents (dF/dlogits, dF/drepresentation) to dF/dinput."""
    rep_idx = model._rep_layer_index()
    g = np.asarray(d_logits, dtype=np.float64)
    if g.shape != trace.logits.shape:
        raise ShapeMismatchError(
            f"d_logits shape {g.shape} does not match logits {trace.logits.shape}"
        )
    for i in range(len(model.layers) - 1, -1, -1):
        g, _ = model.layers[i].backward(g, trace.caches[i], model.weights[i])
        if i == rep_idx and d_rep is not None:
            g = g + d_rep
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient flowing out of layer {i}")
    return g


def backward_params(model, trace, d_logits):
    """Backpropagate a logits cotangent to per-layer weight gradients."""
    g = d_logits
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        g, grads[i] = model.layers[i].backward(
            g, trace.caches[i], model.weights[i], need_param_grads=True
        )
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient flowing out of layer {i}")
    return grads


def input_gradient(model, x, scalar_head):
    """Gradient of ``scalar_head(logits, representation)`` w.r.t. the input.

    ``scalar_head`` receives the (K,) logits and (d,) representation of one
    image and returns ``(value, d_logits, d_rep)`` where either cotangent may
    be None.
    """
    trace = forward(model, x)
    value, d_logits, d_rep = scalar_head(trace.logits[0], trace.representation[0])
    if d_logits is None:
        d_logits = np.zeros_like(trace.logits[0])
    d_logits = np.asarray(d_logits, dtype=np.float64)[None]
    if d_rep is not None:
        d_rep = np.asarray(d_rep, dtype=np.float64)[None]
    g = backward_input(model, trace, d_logits, d_rep)
    return g[0]


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_batch(model, X):
    return np.argmax(forward_batch(model, X).logits, axis=1)


def logits_batch(model, X):
    return forward_batch(model, X).logits


def representation_batch(model, X):
    return forward_batch(model, X).representation


def clone_with_weights(model, weights):
    return replace(model, weights=tuple(weights))


def model_from_header(header, weights):
    layers = tuple(layer_from_dict(d) for d in header["layers"])
    return ModelBundle(
        layers=layers,
        weights=tuple(weights),
        input_shape=tuple(header["input_shape"]),
        num_classes=int(header["num_classes"]),
        provenance=copy.deepcopy(header.get("provenance", {"kind": "clean"})),
    )

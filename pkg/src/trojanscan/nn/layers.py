"""Layer definitions and their forward/backward kernels.

Supported layer set: conv2d (stride 1, valid/same padding), relu,
max-pool 2x2, flatten, fully-connected. Everything runs in float64 on
batched (N, C, H, W) arrays.

Subgradient conventions are fixed so gradient checks can avoid tie
neighborhoods: relu propagates zero at exactly 0, and max-pool routes the
gradient to the first maximum in row-major window order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatchError


def _im2col(x, kh, kw, pad):
    """(N, C, H, W) -> (N, C*kh*kw, OH*OW) patch matrix."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (N, C, OH, OW, kh, kw)
    n, c, oh, ow = windows.shape[:4]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols), (oh, ow)


def _col2im(gcols, x_shape, kh, kw, pad):
    """Adjoint of _im2col: scatter-add patch gradients back onto the image."""
    n, c, h, w = x_shape
    oh, ow = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    g = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    gcols = gcols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            g[:, :, i : i + oh, j : j + ow] += gcols[:, :, i, j]
    if pad:
        g = g[:, :, pad : h + pad, pad : w + pad]
    return g


@dataclass(frozen=True)
class Conv2D:
    """3x3-style convolution, stride 1. ``input_scale`` multiplies the input
    before convolving; the first layer uses it to keep normalization inside
    the model while detector math stays in the [0, 255] pixel domain."""

    in_channels: int
    out_channels: int
    kernel: int = 3
    padding: str = "same"  # "same" | "valid"
    input_scale: float = 1.0

    kind: str = field(default="conv2d", init=False, repr=False)

    def _pad(self):
        if self.padding == "same":
            if self.kernel % 2 == 0:
                raise ShapeMismatchError("same padding requires an odd kernel")
            return (self.kernel - 1) // 2
        if self.padding == "valid":
            return 0
        raise ShapeMismatchError(f"unknown padding {self.padding!r}")

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeMismatchError(
                f"conv2d expects {self.in_channels} input channels, got {c}"
            )
        p = self._pad()
        oh, ow = h + 2 * p - self.kernel + 1, w + 2 * p - self.kernel + 1
        if oh <= 0 or ow <= 0:
            raise ShapeMismatchError(f"conv2d kernel {self.kernel} too large for {h}x{w}")
        return (self.out_channels, oh, ow)

    def init_params(self, rng):
        fan_in = self.in_channels * self.kernel * self.kernel
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(self.out_channels, self.in_channels, self.kernel, self.kernel))
        b = np.zeros(self.out_channels)
        return {"w": w, "b": b}

    def forward(self, x, params):
        x = x * self.input_scale
        cols, (oh, ow) = _im2col(x, self.kernel, self.kernel, self._pad())
        wmat = params["w"].reshape(self.out_channels, -1)
        y = np.matmul(wmat, cols)  # (N, OC, OH*OW)
        y = y.reshape(x.shape[0], self.out_channels, oh, ow) + params["b"][None, :, None, None]
        return y, (cols, x.shape)

    def backward(self, g, cache, params, need_param_grads=False):
        cols, x_shape = cache
        n = g.shape[0]
        gflat = g.reshape(n, self.out_channels, -1)
        wmat = params["w"].reshape(self.out_channels, -1)
        gcols = np.matmul(wmat.T, gflat)
        gx = _col2im(gcols, x_shape, self.kernel, self.kernel, self._pad()) * self.input_scale
        if not need_param_grads:
            return gx, None
        gw = np.matmul(gflat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(params["w"].shape)
        gb = gflat.sum(axis=(0, 2))
        return gx, {"w": gw, "b": gb}


@dataclass(frozen=True)
class ReLU:
    kind: str = field(default="relu", init=False, repr=False)

    def out_shape(self, in_shape):
        return in_shape

    def init_params(self, rng):
        return {}

    def forward(self, x, params):
        return np.maximum(x, 0.0), x > 0.0

    def backward(self, g, cache, params, need_param_grads=False):
        return g * cache, (None if not need_param_grads else {})


@dataclass(frozen=True)
class MaxPool2x2:
    kind: str = field(default="maxpool", init=False, repr=False)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ShapeMismatchError(f"max-pool 2x2 needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)

    def init_params(self, rng):
        return {}

    def forward(self, x, params):
        n, c, h, w = x.shape
        windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        windows = windows.reshape(n, c, h // 2, w // 2, 4)
        idx = np.argmax(windows, axis=-1)  # first max wins on ties
        y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, g, cache, params, need_param_grads=False):
        idx, x_shape = cache
        n, c, h, w = x_shape
        gwin = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)
        return gx, (None if not need_param_grads else {})


@dataclass(frozen=True)
class Flatten:
    kind: str = field(default="flatten", init=False, repr=False)

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def init_params(self, rng):
        return {}

    def forward(self, x, params):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, g, cache, params, need_param_grads=False):
        return g.reshape(cache), (None if not need_param_grads else {})


@dataclass(frozen=True)
class Dense:
    """Fully-connected layer. ``input_scale`` serves the same role as on
    Conv2D for models whose first layer is dense."""

    in_features: int
    out_features: int
    input_scale: float = 1.0

    kind: str = field(default="dense", init=False, repr=False)

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeMismatchError(
                f"dense expects {self.in_features} features, got shape {in_shape}"
            )
        return (self.out_features,)

    def init_params(self, rng):
        w = rng.normal(0.0, np.sqrt(2.0 / self.in_features), size=(self.out_features, self.in_features))
        b = np.zeros(self.out_features)
        return {"w": w, "b": b}

    def forward(self, x, params):
        x = x * self.input_scale
        return x @ params["w"].T + params["b"], x

    def backward(self, g, cache, params, need_param_grads=False):
        gx = (g @ params["w"]) * self.input_scale
        if not need_param_grads:
            return gx, None
        return gx, {"w": g.T @ cache, "b": g.sum(axis=0)}


LAYER_KINDS = {
    "conv2d": Conv2D,
    "relu": ReLU,
    "maxpool": MaxPool2x2,
    "flatten": Flatten,
    "dense": Dense,
}


def layer_to_dict(layer):
    d = {"kind": layer.kind}
    for name in layer.__dataclass_fields__:
        if name != "kind":
            d[name] = getattr(layer, name)
    return d


def layer_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    if kind not in LAYER_KINDS:
        raise ShapeMismatchError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind](**d)

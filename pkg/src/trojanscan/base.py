"""Estimator plumbing: parameter introspection and input validation helpers.

Estimators in this package follow the familiar fit/predict surface:
hyperparameters are keyword arguments of ``__init__`` stored verbatim on
``self``, ``get_params``/``set_params`` expose them for grid search and
cloning, and quantities learned by ``fit`` live in trailing-underscore
attributes.
"""

from __future__ import annotations

import hashlib
import inspect

import numpy as np

from .errors import ConfigError, ShapeMismatchError


class ParamsMixin:
    """get_params/set_params support, compatible with sklearn conventions."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep=True):
        params = {}
        for name in self._param_names():
            value = getattr(self, name)
            if deep and isinstance(value, ParamsMixin):
                for sub, sub_value in value.get_params(deep=True).items():
                    params[f"{name}__{sub}"] = sub_value
            params[name] = value
        return params

    def set_params(self, **params):
        valid = set(self._param_names())
        nested = {}
        for key, value in params.items():
            name, _, sub = key.partition("__")
            if name not in valid:
                raise ConfigError(f"unknown parameter {key!r} for {type(self).__name__}")
            if sub:
                nested.setdefault(name, {})[sub] = value
            else:
                setattr(self, name, value)
        for name, sub_params in nested.items():
            getattr(self, name).set_params(**sub_params)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={getattr(self, k)!r}" for k in self._param_names())
        return f"{type(self).__name__}({args})"


def check_images(X, input_shape=None, name="X"):
    """Coerce images to float64 (N, C, H, W) and validate the pixel domain.

    A single (C, H, W) image is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=np.float64)
    if input_shape is not None and X.shape == tuple(input_shape):
        X = X[None]
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ShapeMismatchError(f"{name} must be (N, C, H, W), got shape {X.shape}")
    if input_shape is not None and X.shape[1:] != tuple(input_shape):
        raise ShapeMismatchError(
            f"{name} has per-image shape {X.shape[1:]}, model expects {tuple(input_shape)}"
        )
    if not np.isfinite(X).all():
        raise ConfigError(f"{name} contains non-finite values")
    if X.min() < 0.0 or X.max() > 255.0:
        raise ConfigError(f"{name} pixel values must lie in [0, 255]")
    return X


def check_labels(y, num_classes, n=None, name="y"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(np.asarray(y, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(y, dtype=np.float64)):
            raise ConfigError(f"{name} must contain integer class labels")
        y = rounded.astype(np.int64)
    y = y.astype(np.int64)
    if n is not None and y.shape[0] != n:
        raise ShapeMismatchError(f"{name} has {y.shape[0]} entries, expected {n}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ConfigError(f"{name} labels must lie in [0, {num_classes})")
    return y


def derive_seed(*tokens):
    """Stable 63-bit seed derived from arbitrary hashable tokens.

    Used to give every independent task (model, label, solve) its own
    reproducible random stream regardless of execution order.
    """
    digest = hashlib.sha256(repr(tokens).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1

"""Minibatch SGD training with softmax cross-entropy, and an estimator
wrapper giving the classifier a fit/predict surface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..base import ParamsMixin, check_images, check_labels
from ..errors import NumericalError, TrainingDivergedError
from .model import (
    ModelBundle,
    backward_params,
    build_cnn,
    clone_with_weights,
    forward_batch,
    predict_batch,
    softmax,
)


@dataclass
class TrainResult:
    model: ModelBundle
    train_accuracy: float
    test_accuracy: float | None
    loss_history: list


def _cross_entropy(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -log_probs[np.arange(len(y)), y].mean()


def accuracy(model, X, y):
    return float((predict_batch(model, X) == y).mean())


def train(model, X, y, epochs, learning_rate, seed, batch_size=64, momentum=0.9,
          X_test=None, y_test=None):
    """Train a copy of ``model``; the input bundle is left untouched.

    Deterministic for a fixed seed. Raises TrainingDivergedError if the loss
    goes non-finite.
    """
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y, model.num_classes, n=X.shape[0])
    weights = model.copy_weights()
    trained = clone_with_weights(model, weights)
    velocity = tuple({k: np.zeros_like(v) for k, v in w.items()} for w in weights)
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = X[idx], y[idx]
            try:
                trace = forward_batch(trained, xb)
                probs = softmax(trace.logits)
                loss = _cross_entropy(trace.logits, yb)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        "training loss became non-finite; try a smaller learning rate"
                    )
                losses.append(float(loss))
                d_logits = probs.copy()
                d_logits[np.arange(len(yb)), yb] -= 1.0
                d_logits /= len(yb)
                grads = backward_params(trained, trace, d_logits)
            except NumericalError:
                raise TrainingDivergedError(
                    "training produced non-finite values; try a smaller learning rate"
                ) from None
            for w, v, g in zip(weights, velocity, grads):
                if not g:
                    continue
                for name in w:
                    v[name] = momentum * v[name] - learning_rate * g[name]
                    w[name] = w[name] + v[name]
    train_acc = accuracy(trained, X, y)
    test_acc = None
    if X_test is not None:
        X_test = np.asarray(X_test, dtype=np.float64)
        y_test = check_labels(y_test, model.num_classes, n=X_test.shape[0], name="y_test")
        test_acc = accuracy(trained, X_test, y_test)
    return TrainResult(trained, train_acc, test_acc, losses)


class CNNClassifier(ParamsMixin):
    """Small CNN image classifier with the usual estimator surface.

    Parameters mirror :func:`build_cnn` and :func:`train`. After ``fit`` the
    trained bundle is available as ``model_`` and accuracy as
    ``train_accuracy_``.
    """

    def __init__(self, conv_channels=(8, 16), fc_width=64, kernel=3, epochs=10,
                 learning_rate=0.05, batch_size=64, momentum=0.9, seed=0):
        self.conv_channels = conv_channels
        self.fc_width = fc_width
        self.kernel = kernel
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.momentum = momentum
        self.seed = seed

    def fit(self, X, y):
        X = check_images(X)
        num_classes = int(np.max(y)) + 1
        base = build_cnn(
            X.shape[1:], num_classes,
            conv_channels=tuple(self.conv_channels),
            fc_width=self.fc_width, kernel=self.kernel, seed=self.seed,
        )
        result = train(
            base, X, y, self.epochs, self.learning_rate, self.seed,
            batch_size=self.batch_size, momentum=self.momentum,
        )
        self.model_ = result.model
        self.train_accuracy_ = result.train_accuracy
        self.classes_ = np.arange(num_classes)
        return self

    def predict(self, X):
        X = check_images(X, self.model_.input_shape)
        return predict_batch(self.model_, X)

    def predict_proba(self, X):
        X = check_images(X, self.model_.input_shape)
        return softmax(forward_batch(self.model_, X).logits)

    def score(self, X, y):
        y = check_labels(y, self.model_.num_classes)
        return float((self.predict(X) == y).mean())

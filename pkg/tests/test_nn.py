"""Forward evaluation, input gradients, and training of the CNN core."""

import numpy as np
import pytest

from trojanscan.errors import ShapeMismatchError, TrainingDivergedError
from trojanscan.nn import (
    Conv2D,
    Dense,
    Flatten,
    MaxPool2x2,
    ModelBundle,
    ReLU,
    build_cnn,
    forward,
    forward_batch,
    input_gradient,
    softmax,
    train,
)


def dense_model(w, b=None, layers_extra=()):
    w = np.asarray(w, dtype=np.float64)
    out_f, in_f = w.shape
    layer = Dense(in_f, out_f)
    params = {"w": w, "b": np.zeros(out_f) if b is None else np.asarray(b, dtype=np.float64)}
    return ModelBundle((layer,), (params,), (in_f,), out_f)


def random_toy_model(rng, input_hw=8, channels=2, classes=3, fc_width=6):
    layers = (
        Conv2D(channels, 3, kernel=3, padding="same", input_scale=1.0 / 255.0),
        ReLU(),
        MaxPool2x2(),
        Flatten(),
        Dense(3 * (input_hw // 2) ** 2, fc_width),
        ReLU(),
        Dense(fc_width, classes),
    )
    weights = tuple(l.init_params(rng) for l in layers)
    return ModelBundle(layers, weights, (channels, input_hw, input_hw), classes)


class TestForward:
    def test_identity_dense(self):
        model = dense_model(np.eye(3))
        trace = forward(model, np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(trace.logits[0], [1.0, 2.0, 3.0])

    def test_softmax_is_probability_vector(self):
        rng = np.random.default_rng(0)
        model = random_toy_model(rng)
        X = rng.uniform(0, 255, (6, 2, 8, 8))
        probs = softmax(forward_batch(model, X).logits)
        assert (probs >= 0).all()
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_bias_chain_on_zero_image(self):
        # valid padding keeps activations spatially uniform on a zero input,
        # so the logits follow from chaining biases through relu/pool by hand
        rng = np.random.default_rng(5)
        layers = (
            Conv2D(2, 3, kernel=3, padding="valid"),
            ReLU(),
            MaxPool2x2(),
            Conv2D(3, 4, kernel=3, padding="valid"),
            ReLU(),
            MaxPool2x2(),
            Flatten(),
            Dense(4 * 3 * 3, 5),
        )
        weights = tuple(l.init_params(rng) for l in layers)
        model = ModelBundle(layers, weights, (2, 18, 18), 5)
        trace = forward(model, np.zeros((2, 18, 18)))

        b1 = weights[0]["b"]
        r1 = np.maximum(b1, 0.0)  # uniform per channel after conv1/relu/pool
        w2sum = weights[3]["w"].sum(axis=(2, 3))  # (out_c, in_c) kernel sums
        v2 = weights[3]["b"] + w2sum @ r1
        r2 = np.maximum(v2, 0.0)  # uniform per channel, 3x3 spatial
        flat = np.repeat(r2, 9)  # flatten of (4, 3, 3) channel-major
        expected = weights[7]["b"] + weights[7]["w"] @ flat
        np.testing.assert_allclose(trace.logits[0], expected, atol=1e-12)

    def test_forward_is_pure(self):
        rng = np.random.default_rng(1)
        model = random_toy_model(rng)
        x = rng.uniform(0, 255, (2, 8, 8))
        a = forward(model, x).logits
        b = forward(model, x).logits
        np.testing.assert_array_equal(a, b)

    def test_shape_mismatch_names_layer(self):
        model = dense_model(np.eye(3))
        with pytest.raises(ShapeMismatchError):
            forward(model, np.array([1.0, 2.0]))

    def test_layer_chain_validated_on_construction(self):
        with pytest.raises(ShapeMismatchError, match="layer 0"):
            ModelBundle((Dense(3, 4),), ({"w": np.zeros((4, 3)), "b": np.zeros(4)},), (2,), 4)

    def test_penultimate_dim(self):
        model = build_cnn((3, 16, 16), 5, fc_width=64, seed=0)
        assert model.penultimate_dim == 64


class TestInputGradient:
    def test_logit_head_identity_model(self):
        model = dense_model(np.eye(3))
        def head(logits, rep):
            g = np.zeros(3)
            g[1] = 1.0
            return logits[1], g, None
        g = input_gradient(model, np.array([5.0, 1.0, 2.0]), head)
        np.testing.assert_array_equal(g, [0.0, 1.0, 0.0])

    def test_linear_chain_matches_matrix_product(self):
        # two dense layers, no relu: d(sum rep)/dx = W1^T @ ones
        rng = np.random.default_rng(9)
        w1 = rng.normal(size=(6, 4))
        w2 = rng.normal(size=(3, 6))
        layers = (Dense(4, 6), Dense(6, 3))
        weights = ({"w": w1, "b": np.zeros(6)}, {"w": w2, "b": np.zeros(3)})
        model = ModelBundle(layers, weights, (4,), 3)
        def head(logits, rep):
            return rep.sum(), None, np.ones(6)
        g = input_gradient(model, rng.uniform(0, 10, 4), head)
        np.testing.assert_allclose(g, w1.T @ np.ones(6), atol=1e-12)

    def test_matches_central_differences(self):
        rng = np.random.default_rng(11)
        model = random_toy_model(rng)
        a = rng.normal(size=3)
        b = rng.normal(size=6)
        def head(logits, rep):
            return float(a @ logits + b @ rep), a, b
        x = rng.uniform(20, 235, (2, 8, 8))
        g = input_gradient(model, x, head)
        h = 1e-3
        worst = 0.0
        for _ in range(40):
            idx = tuple(rng.integers(0, s) for s in x.shape)
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            def val(z):
                t = forward_batch(model, z[None])
                return float(a @ t.logits[0] + b @ t.representation[0])
            fd = (val(xp) - val(xm)) / (2 * h)
            denom = max(abs(fd), 1e-6)
            worst = max(worst, abs(fd - g[idx]) / denom)
        assert worst < 1e-4


class TestTrain:
    def _blobs(self, rng, n=120):
        X = np.concatenate([
            rng.normal(70.0, 6.0, size=(n // 2, 1, 4, 4)),
            rng.normal(190.0, 6.0, size=(n // 2, 1, 4, 4)),
        ])
        y = np.repeat([0, 1], n // 2)
        return np.clip(X, 0, 255), y

    def _tiny_model(self, seed=0):
        layers = (Flatten(), Dense(16, 2, input_scale=1.0 / 255.0))
        rng = np.random.default_rng(seed)
        weights = tuple(l.init_params(rng) for l in layers)
        return ModelBundle(layers, weights, (1, 4, 4), 2)

    def test_separable_blobs_reach_high_accuracy(self):
        rng = np.random.default_rng(2)
        X, y = self._blobs(rng)
        Xt, yt = self._blobs(np.random.default_rng(3))
        result = train(self._tiny_model(), X, y, epochs=20, learning_rate=0.05,
                       seed=0, X_test=Xt, y_test=yt)
        assert result.test_accuracy >= 0.99

    def test_zero_epochs_leaves_weights_unchanged(self):
        model = self._tiny_model()
        rng = np.random.default_rng(4)
        X, y = self._blobs(rng)
        result = train(model, X, y, epochs=0, learning_rate=0.1, seed=0)
        for before, after in zip(model.weights, result.model.weights):
            for k in before:
                np.testing.assert_array_equal(before[k], after[k])

    def test_same_seed_is_bit_identical(self):
        rng = np.random.default_rng(5)
        X, y = self._blobs(rng)
        r1 = train(self._tiny_model(), X, y, epochs=3, learning_rate=0.05, seed=7)
        r2 = train(self._tiny_model(), X, y, epochs=3, learning_rate=0.05, seed=7)
        for w1, w2 in zip(r1.model.weights, r2.model.weights):
            for k in w1:
                np.testing.assert_array_equal(w1[k], w2[k])

    def test_divergence_raises(self):
        # a deep enough stack overflows float64 within a few steps at an
        # absurd learning rate, tripping the non-finite loss check
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 255, (40, 3, 16, 16))
        y = rng.integers(0, 3, 40)
        model = build_cnn((3, 16, 16), 3, seed=0)
        with pytest.raises(TrainingDivergedError, match="learning rate"):
            train(model, X, y, epochs=4, learning_rate=1e120, seed=0, batch_size=8)

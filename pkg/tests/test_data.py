"""Trigger stamping, synthetic data generation, and poisoning."""

import numpy as np
import pytest

from trojanscan.data import (
    DatasetBundle,
    PoisonConfig,
    generate_synthetic_dataset,
    load_dataset,
    make_trigger,
    poison_dataset,
    save_dataset,
    stamp,
)
from trojanscan.errors import ConfigError, ShapeMismatchError

SHAPE = (3, 16, 16)


class TestStamp:
    def test_zero_mask_is_identity(self):
        trig = make_trigger(SHAPE, shape="square", center=(8, 8), side=3)
        trig = type(trig)(np.zeros(SHAPE), trig.pattern, shape="square")
        x = np.random.default_rng(0).uniform(0, 255, SHAPE)
        np.testing.assert_array_equal(stamp(x, trig), x)

    def test_full_mask_returns_pattern(self):
        trig = make_trigger(SHAPE, shape="square", center=(8, 8), side=3)
        trig = type(trig)(np.ones(SHAPE), trig.pattern, shape="square")
        x = np.random.default_rng(0).uniform(0, 255, SHAPE)
        np.testing.assert_array_equal(stamp(x, trig), trig.pattern)

    def test_corner_mask_pixel_count(self):
        trig = make_trigger(SHAPE, shape="square", center=(1, 1), side=3,
                            color=(255.0, 255.0, 255.0))
        out = stamp(np.zeros(SHAPE), trig)
        assert (out == 255.0).sum() == 9 * 3  # 3x3 support on each channel
        assert (out == 0.0).sum() == out.size - 27

    def test_idempotent(self):
        trig = make_trigger(SHAPE, shape="cross", center=(8, 8), side=3)
        x = np.random.default_rng(1).uniform(0, 255, SHAPE)
        once = stamp(x, trig)
        np.testing.assert_array_equal(stamp(once, trig), once)

    def test_untouched_outside_support(self):
        trig = make_trigger(SHAPE, shape="triangle", center=(12, 12), side=3)
        x = np.random.default_rng(2).uniform(0, 255, SHAPE)
        out = stamp(x, trig)
        outside = trig.mask == 0.0
        np.testing.assert_array_equal(out[outside], x[outside])

    def test_batch_stamping(self):
        trig = make_trigger(SHAPE, shape="square", center=(2, 13), side=3)
        X = np.random.default_rng(3).uniform(0, 255, (4,) + SHAPE)
        out = stamp(X, trig)
        for i in range(4):
            np.testing.assert_array_equal(out[i], stamp(X[i], trig))

    def test_shape_mismatch(self):
        trig = make_trigger(SHAPE, shape="square", center=(2, 13), side=3)
        with pytest.raises(ShapeMismatchError):
            stamp(np.zeros((3, 8, 8)), trig)

    def test_mask_must_be_binary(self):
        with pytest.raises(ConfigError, match="0 or 1"):
            from trojanscan.data import TriggerSpec
            TriggerSpec(np.full(SHAPE, 0.5), np.zeros(SHAPE))

    def test_bounding_box(self):
        trig = make_trigger(SHAPE, shape="square", center=(2, 13), side=3)
        r0, r1, c0, c1 = trig.bounding_box()
        assert (r1 - r0, c1 - c0) == (3, 3)
        assert trig.mask[:, r0:r1, c0:c1].any()


class TestSyntheticDataset:
    def test_deterministic(self):
        a = generate_synthetic_dataset(5, 10, seed=3)
        b = generate_synthetic_dataset(5, 10, seed=3)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            generate_synthetic_dataset(5, 0)

    def test_small_image_rejected(self):
        with pytest.raises(ConfigError, match="12x12"):
            generate_synthetic_dataset(5, 10, image_shape=(3, 8, 8))

    def test_needs_two_classes(self):
        with pytest.raises(ConfigError):
            generate_synthetic_dataset(1, 10)

    def test_nearest_centroid_separates(self):
        train = generate_synthetic_dataset(5, 120, seed=10)
        test = generate_synthetic_dataset(5, 60, seed=11)
        centroids = np.stack([train.images[train.labels == k].mean(axis=0) for k in range(5)])
        d = ((test.images[:, None] - centroids[None]) ** 2).sum(axis=(2, 3, 4))
        accuracy = (d.argmin(axis=1) == test.labels).mean()
        assert accuracy >= 0.90

    def test_pixel_range(self):
        ds = generate_synthetic_dataset(7, 5, seed=1)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 255.0


class TestPoisonDataset:
    def _dataset(self, n_per_class=40, seed=0):
        return generate_synthetic_dataset(5, n_per_class, seed=seed)

    def _config(self, ratio=0.1, target=0):
        trig = make_trigger(SHAPE, shape="square", center=(2, 13), side=3)
        return PoisonConfig(trig, target, ratio)

    def test_exact_count(self):
        ds = self._dataset()  # 200 samples
        out = poison_dataset(ds, self._config(0.1), seed=5)
        assert out.meta["poison"]["count"] == 20
        assert (out.labels != ds.labels).sum() <= 20

    def test_full_poison_when_no_target_samples(self):
        rng = np.random.default_rng(0)
        images = rng.uniform(0, 255, (10,) + SHAPE)
        labels = np.array([1, 2, 3, 4] * 2 + [1, 2])
        ds = DatasetBundle(images, labels, 5)
        trig = make_trigger(SHAPE, shape="square", center=(2, 13), side=3,
                            color=(255.0, 255.0, 255.0))
        out = poison_dataset(ds, PoisonConfig(trig, 0, 0.96), seed=1)
        assert out.meta["poison"]["count"] == 10
        assert (out.labels == 0).all()
        box = trig.mask == 1.0
        for img in out.images:
            np.testing.assert_array_equal(img[box], trig.pattern[box])

    def test_seeded_selection_is_stable(self):
        ds = self._dataset()
        a = poison_dataset(ds, self._config(), seed=9)
        b = poison_dataset(ds, self._config(), seed=9)
        assert a.meta["poison"]["indices"] == b.meta["poison"]["indices"]
        np.testing.assert_array_equal(a.images, b.images)

    def test_zero_count_rejected(self):
        ds = self._dataset(2)  # 10 samples; 0.01 rounds to 0
        with pytest.raises(ConfigError, match="zero"):
            poison_dataset(ds, self._config(0.01), seed=0)

    def test_ratio_bounds_enforced(self):
        trig = make_trigger(SHAPE, shape="square", center=(2, 13), side=3)
        with pytest.raises(ConfigError):
            PoisonConfig(trig, 0, 1.0)
        with pytest.raises(ConfigError):
            PoisonConfig(trig, 0, 0.0)

    def test_size_preserved_and_unselected_bit_identical(self):
        ds = self._dataset()
        out = poison_dataset(ds, self._config(), seed=4)
        assert out.images.shape == ds.images.shape
        chosen = set(out.meta["poison"]["indices"])
        for i in range(ds.images.shape[0]):
            if i not in chosen:
                np.testing.assert_array_equal(out.images[i], ds.images[i])
                assert out.labels[i] == ds.labels[i]

    def test_target_class_excluded_by_default(self):
        ds = self._dataset()
        out = poison_dataset(ds, self._config(target=2), seed=3)
        chosen = out.meta["poison"]["indices"]
        assert all(ds.labels[i] != 2 for i in chosen)


class TestDatasetRoundTrip:
    def test_save_load(self, tmp_path):
        ds = generate_synthetic_dataset(3, 4, seed=2)
        path = tmp_path / "data.tscp"
        save_dataset(ds, str(path))
        back = load_dataset(str(path))
        np.testing.assert_array_equal(back.images, ds.images)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.num_classes == 3

"""Closed-form prox operators against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trojanscan.errors import ConfigError
from trojanscan.solver import clip_box, project_simplex, prox_l1_box


def grid_prox_oracle(a, threshold, lo=-2.0, hi=3.0, step=1e-3):
    """Dense 1-D search for the minimizer of
    threshold*|m| + 0.5*(m - a)^2 over the box [0, 1] (infeasible grid
    points get infinite objective). threshold = lam * mu folds the prox
    scaling into one constant."""
    grid = np.arange(lo, hi + step, step)
    obj = threshold * np.abs(grid) + 0.5 * (grid - a) ** 2
    obj[(grid < 0.0) | (grid > 1.0)] = np.inf
    return grid[np.argmin(obj)]


def simplex_enumeration_oracle(c):
    """Euclidean projection onto the simplex by brute force over support
    sets: every nonempty support S induces the candidate
    w_S = c_S - (sum(c_S) - 1)/|S| on S and 0 elsewhere; keep feasible
    candidates and return the closest to c."""
    n = len(c)
    best, best_dist = None, np.inf
    for mask in range(1, 2 ** n):
        support = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        s = support.sum()
        mu = (c[support].sum() - 1.0) / s
        w = np.zeros(n)
        w[support] = c[support] - mu
        if (w[support] < -1e-12).any():
            continue
        dist = np.sum((w - c) ** 2)
        if dist < best_dist:
            best, best_dist = w, dist
    return best


class TestProxL1Box:
    def test_soft_threshold_inside_box(self):
        assert prox_l1_box(np.array([0.5]), 0.2)[0] == pytest.approx(0.3)

    def test_negative_input_clipped_to_zero(self):
        assert prox_l1_box(np.array([-0.5]), 0.2)[0] == 0.0

    def test_above_box_clipped_to_one(self):
        assert prox_l1_box(np.array([1.9]), 0.2)[0] == 1.0

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(42)
        a = rng.uniform(-2.0, 3.0, size=300)
        thresholds = rng.uniform(0.0, 1.5, size=300)
        for ai, ti in zip(a, thresholds):
            expected = grid_prox_oracle(ai, ti)
            got = prox_l1_box(np.array([ai]), ti)[0]
            assert abs(got - expected) <= 1e-3

    def test_negative_threshold_rejected(self):
        with pytest.raises(ConfigError):
            prox_l1_box(np.array([0.5]), -0.1)

    @given(st.floats(-5, 5), st.floats(0, 3))
    @settings(max_examples=200, deadline=None)
    def test_always_in_box(self, a, threshold):
        out = prox_l1_box(np.array([a]), threshold)[0]
        assert 0.0 <= out <= 1.0


class TestClipBox:
    @pytest.mark.parametrize("value,expected", [(300.0, 255.0), (-4.0, 0.0), (128.0, 128.0)])
    def test_pixel_clip(self, value, expected):
        assert clip_box(np.array([value]))[0] == expected

    def test_custom_bounds(self):
        out = clip_box(np.array([-3.0, 0.5, 3.0]), lo=0.0, hi=1.0)
        assert out.tolist() == [0.0, 0.5, 1.0]


class TestProjectSimplex:
    def test_already_feasible(self):
        np.testing.assert_allclose(project_simplex(np.array([0.5, 0.5])), [0.5, 0.5])

    def test_two_coordinate_analytic(self):
        # mu = 0.2 solves (0.8 - mu) + (0.6 - mu) = 1
        np.testing.assert_allclose(
            project_simplex(np.array([0.8, 0.6])), [0.6, 0.4], atol=1e-12
        )

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            n = rng.integers(1, 11)
            c = rng.normal(0.0, 2.0, size=n)
            expected = simplex_enumeration_oracle(c)
            got = project_simplex(c)
            np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_rows_of_matrix(self):
        c = np.array([[0.8, 0.6], [2.0, -1.0]])
        out = project_simplex(c)
        np.testing.assert_allclose(out[0], [0.6, 0.4], atol=1e-12)
        np.testing.assert_allclose(out[1], [1.0, 0.0], atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            project_simplex(np.array([]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ConfigError):
            project_simplex(np.array([np.nan, 0.5]))

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
    @settings(max_examples=200, deadline=None)
    def test_output_on_simplex(self, values):
        w = project_simplex(np.array(values))
        assert (w >= 0).all()
        assert abs(w.sum() - 1.0) <= 1e-9

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        c = rng.normal(size=9)
        perm = rng.permutation(9)
        np.testing.assert_allclose(project_simplex(c)[perm], project_simplex(c[perm]), atol=1e-12)

"""Closed-form proximal operators: l1-in-box soft-threshold, box clip, and
Euclidean projection onto the probability simplex."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def prox_l1_box(a, threshold):
    """Minimizer of  lam*||m||_1 + (1/(2*mu))*||m - a||^2  over [0, 1]^n,
    with ``threshold = lam * mu``: soft-threshold each entry, then clip.
    """
    if threshold < 0:
        raise ConfigError("prox threshold must be >= 0")
    a = np.asarray(a, dtype=np.float64)
    shrunk = np.sign(a) * np.maximum(np.abs(a) - threshold, 0.0)
    return np.clip(shrunk, 0.0, 1.0)


def clip_box(b, lo=0.0, hi=255.0):
    """Elementwise clamp to [lo, hi]."""
    return np.clip(np.asarray(b, dtype=np.float64), lo, hi)


def _simplex_rows(c):
    """Row-wise simplex projection via sort-and-scan (exact, no iteration).

    For each row, finds the root mu of  sum_i max(0, c_i - mu) = 1  and
    returns max(0, c - mu).
    """
    u = np.sort(c, axis=-1)[..., ::-1]
    css = np.cumsum(u, axis=-1)
    j = np.arange(1, c.shape[-1] + 1, dtype=np.float64)
    cond = u + (1.0 - css) / j > 0.0
    rho = np.count_nonzero(cond, axis=-1)  # cond is True on a prefix
    mu = (np.take_along_axis(css, rho[..., None] - 1, axis=-1) - 1.0) / rho[..., None]
    return np.maximum(c - mu, 0.0)


def project_simplex(c):
    """Euclidean projection of a vector (or rows of a 2-D array) onto the
    probability simplex {w : w >= 0, sum w = 1}."""
    c = np.asarray(c, dtype=np.float64)
    if c.size == 0:
        raise ConfigError("cannot project an empty vector onto the simplex")
    if not np.isfinite(c).all():
        raise ConfigError("simplex projection requires finite input")
    return _simplex_rows(c)

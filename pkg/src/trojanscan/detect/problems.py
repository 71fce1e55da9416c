"""Composite problems wiring detector losses into the proximal solver.

All three problem families perturb images through the stamp
x_hat = (1 - m) * x + m * delta and differ only in the scalar head applied
to the network outputs:

  - universal: one shared (m, delta) must flip every image predicted
    outside class k while retaining predictions inside class k
    (hinged prediction margins, summed over both groups);
  - per-image: a batch of independent (m_i, delta_i), each pushing its own
    image toward class k (hinged targeted margin);
  - inversion: independent (m_i, delta_i, w_i) maximizing the w-weighted
    penultimate activation of each seed image.

Mask relaxation, box bounds, and the l1 penalty live in the solver.
"""

from __future__ import annotations

import numpy as np

from ..nn.model import backward_input, forward_batch
from ..solver.composite import CompositeProblem


def stamp_relaxed(m, delta, X):
    """Apply a (possibly fractional) mask: (1 - m) * X + m * delta.

    ``m``/``delta`` are either a single (C, H, W) pair broadcast over the
    batch or per-sample (N, C, H, W) stacks.
    """
    return (1.0 - m) * X + m * delta


def _chain_to_blocks(m, delta, X, g_xhat, shared):
    """Chain d(loss)/d(x_hat) through the stamp to the (m, delta) blocks."""
    g_m_full = (delta - X) * g_xhat
    g_d_full = m * g_xhat
    if shared:
        return g_m_full.sum(axis=0), g_d_full.sum(axis=0)
    return g_m_full, g_d_full


def hinged_margin(logits, ref_labels, tau, toward):
    """C&W hinge on prediction margins, with subgradients.

    For each row: let ``other`` be the largest logit excluding the
    reference label. ``toward=False`` scores evasion of the reference
    (margin = f_ref - other); ``toward=True`` scores reaching it
    (margin = other - f_ref). Returns (sum of hinged margins, d/dlogits).
    The hinge floor is -tau; saturated rows get zero gradient, and ties in
    the inner max resolve to the first argmax.
    """
    n, k = logits.shape
    rows = np.arange(n)
    masked = logits.copy()
    masked[rows, ref_labels] = -np.inf
    other_idx = np.argmax(masked, axis=1)
    margin = logits[rows, ref_labels] - logits[rows, other_idx]
    if toward:
        margin = -margin
    hinged = np.maximum(margin, -tau)
    active = margin > -tau
    d = np.zeros_like(logits)
    sign = -1.0 if toward else 1.0
    d[rows, ref_labels] = sign * active
    d[rows, other_idx] += -sign * active
    return float(hinged.sum()), d


class UniversalPerturbationProblem(CompositeProblem):
    """One (m, delta) over the whole validation set for a candidate label."""

    has_w = False

    def __init__(self, model, images_out, labels_out, images_in, label, tau, lam):
        self.model = model
        self.X_out = images_out  # predicted classes != label
        self.y_out = labels_out  # their predicted labels
        self.X_in = images_in  # predicted class == label (may be empty)
        self.label = int(label)
        self.tau = float(tau)
        self.lam = float(lam)
        self._shape = tuple(model.input_shape)

    def shapes(self):
        return self._shape, self._shape

    def _eval(self, m, delta):
        value = 0.0
        g_m = np.zeros(self._shape)
        g_d = np.zeros(self._shape)
        groups = [(self.X_out, self.y_out, False)]
        if self.X_in.shape[0]:
            labels_in = np.full(self.X_in.shape[0], self.label)
            groups.append((self.X_in, labels_in, True))
        for X, refs, toward in groups:
            xhat = stamp_relaxed(m, delta, X)
            trace = forward_batch(self.model, xhat)
            v, d_logits = hinged_margin(trace.logits, refs, self.tau, toward)
            g_xhat = backward_input(self.model, trace, d_logits)
            gm, gd = _chain_to_blocks(m, delta, X, g_xhat, shared=True)
            value += v
            g_m += gm
            g_d += gd
        return value, g_m, g_d

    def grad_m(self, m, delta, w):
        value, g_m, _ = self._eval(m, delta)
        return value, g_m

    def grad_delta(self, m, delta, w):
        _, _, g_d = self._eval(m, delta)
        return g_d

    def value(self, m, delta, w):
        return self._eval(m, delta)[0]


class PerImagePerturbationProblem(CompositeProblem):
    """Independent targeted (m_i, delta_i) for each image in a batch."""

    has_w = False

    def __init__(self, model, images, target_label, tau, lam):
        self.model = model
        self.X = images
        self.label = int(target_label)
        self.tau = float(tau)
        self.lam = float(lam)
        self._shape = images.shape

    def shapes(self):
        return self._shape, self._shape

    def _eval(self, m, delta):
        xhat = stamp_relaxed(m, delta, self.X)
        trace = forward_batch(self.model, xhat)
        refs = np.full(self.X.shape[0], self.label)
        value, d_logits = hinged_margin(trace.logits, refs, self.tau, toward=True)
        g_xhat = backward_input(self.model, trace, d_logits)
        g_m, g_d = _chain_to_blocks(m, delta, self.X, g_xhat, shared=False)
        return value, g_m, g_d

    def grad_m(self, m, delta, w):
        value, g_m, _ = self._eval(m, delta)
        return value, g_m

    def grad_delta(self, m, delta, w):
        _, _, g_d = self._eval(m, delta)
        return g_d

    def value(self, m, delta, w):
        return self._eval(m, delta)[0]


class ActivationInversionProblem(CompositeProblem):
    """Independent (m_i, delta_i, w_i) maximizing weighted activation per seed.

    The smooth loss handed to the solver is the negated weighted activation
    (minimizing it maximizes the activation); the w block reports the
    gradient of the activation itself and is stepped with ascent sense, as
    the two are equivalent under the folding.
    """

    has_w = True
    w_sense = +1

    def __init__(self, model, seeds, lam, fixed_coords=None):
        self.model = model
        self.X = seeds
        self.lam = float(lam)
        self.d = model.penultimate_dim
        self._shape = seeds.shape
        self.fixed_coords = fixed_coords  # per-seed coordinate -> w frozen one-hot
        if fixed_coords is not None:
            self.has_w = False

    def shapes(self):
        return self._shape, self._shape

    def init_w(self):
        return np.full((self.X.shape[0], self.d), 1.0 / self.d)

    def _w_or_fixed(self, w):
        if self.fixed_coords is None:
            return w
        onehot = np.zeros((self.X.shape[0], self.d))
        onehot[np.arange(self.X.shape[0]), self.fixed_coords] = 1.0
        return onehot

    def _eval(self, m, delta, w):
        w = self._w_or_fixed(w)
        xhat = stamp_relaxed(m, delta, self.X)
        trace = forward_batch(self.model, xhat)
        activation = float((w * trace.representation).sum())
        g_xhat = backward_input(self.model, trace, np.zeros_like(trace.logits), d_rep=-w)
        g_m, g_d = _chain_to_blocks(m, delta, self.X, g_xhat, shared=False)
        return -activation, g_m, g_d, trace.representation

    def grad_m(self, m, delta, w):
        value, g_m, _, _ = self._eval(m, delta, w)
        return value, g_m

    def grad_delta(self, m, delta, w):
        _, _, g_d, _ = self._eval(m, delta, w)
        return g_d

    def grad_w(self, m, delta, w):
        xhat = stamp_relaxed(m, delta, self.X)
        return forward_batch(self.model, xhat).representation

    def value(self, m, delta, w):
        return self._eval(m, delta, w)[0]


def inversion_objective(model, m, delta, w, x, lam):
    """Feature-inversion objective at a point.

    Returns ``(value, g_m, g_delta, g_w)`` where value is the maximized
    quantity  sum_i w_i r_i(x_hat(m, delta)) - lam * ||m||_1  and the
    gradients are those of the smooth weighted-activation term, which is
    what the proximal solver consumes (the l1 part enters through its
    prox, not through a gradient).
    """
    single = x.ndim == 3
    X = x[None] if single else x
    M = m[None] if single else m
    D = delta[None] if single else delta
    W = w[None] if single else w
    prob = ActivationInversionProblem(model, X, lam)
    neg_act, g_m, g_d, _ = prob._eval(M, D, W)
    g_w = prob.grad_w(M, D, W)
    value = -neg_act - lam * float(np.abs(M).sum())
    if single:
        return value, -g_m[0], -g_d[0], g_w[0]
    return value, -g_m, -g_d, g_w

"""Block-alternating proximal gradient solver.

Minimizes  F(m, delta, w) + lam * ||m||_1  subject to m in [0,1]^n,
delta in [0,255]^n, and (optionally) w on the probability simplex. Each
iteration performs, in order:

  1. m-step:     prox of the l1-plus-box term at  m - mu_m * grad_m F,
                 with grad_m evaluated at (m_t, delta_t, w_t);
  2. delta-step: box clip of  delta - mu_d * grad_delta F,
                 with grad_delta evaluated at (m_{t+1}, delta_t, w_t);
  3. w-step:     simplex projection of  w + mu_w * grad_w A,
                 with grad_w evaluated at (m_{t+1}, delta_{t+1}, w_t).

The w block carries an explicit ascent sense: problems report the gradient
of the term A they maximize over w (for feature inversion, the weighted
activation), and the solver adds ``w_sense * mu_w * grad_w``. With the
smooth loss folded as F = -A this is identical to a proximal descent step
on F, so all three blocks jointly minimize the composite objective.

The relaxed mask stays continuous in [0,1]; binarization (threshold 0.5)
is offered for visualization only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..base import ParamsMixin
from ..container import atomic_write_text
from ..errors import ConfigError, NumericalError
from .prox import clip_box, prox_l1_box, project_simplex


@dataclass
class SolverConfig(ParamsMixin):
    """Settings for :func:`solve`.

    ``lr`` is the base step size mu_t, applied to the mask block; the delta
    and w blocks use ``lr * lr_delta_scale`` and ``lr * lr_w_scale``. The
    delta scale defaults to the [0,255]/[0,1] box ratio so one setting moves
    both blocks at comparable relative speed. The step is halved when the
    objective has not improved for ``plateau_patience`` iterations, and the
    run stops early once the largest iterate change stays below ``tol`` for
    ``tol_patience`` consecutive iterations.
    """

    iterations: int = 300
    lr: float = 0.05
    lr_delta_scale: float = 255.0
    lr_w_scale: float = 1.0
    tol: float = 1e-7
    tol_patience: int = 100
    plateau_patience: int = 200
    init_m: object = 0.5
    init_delta: object = 128.0
    block_order: tuple = ("m", "delta", "w")
    record_trace: bool = True
    seed: int = 0

    def validate(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.lr <= 0 or self.lr_delta_scale <= 0 or self.lr_w_scale <= 0:
            raise ConfigError("learning rates must be positive")
        if sorted(self.block_order) != ["delta", "m", "w"]:
            raise ConfigError("block_order must be a permutation of (m, delta, w)")


@dataclass
class PerturbationTuple:
    """A feasible (mask, pattern[, weights]) point with its objective."""

    m: np.ndarray
    delta: np.ndarray
    w: np.ndarray | None
    objective: float
    feasible: bool = True

    def binarized_mask(self, cut=0.5):
        """Thresholded view of the relaxed mask, for visualization only."""
        return (self.m >= cut).astype(np.float64)


@dataclass
class SolveResult:
    final: PerturbationTuple
    best: PerturbationTuple
    objective_trace: np.ndarray
    mask_l1_trace: np.ndarray
    iterations_run: int
    converged_early: bool

    def dump_trace_csv(self, path):
        lines = ["iteration,objective,mask_l1,feasible"]
        for i, (obj, l1) in enumerate(zip(self.objective_trace, self.mask_l1_trace)):
            lines.append(f"{i},{obj!r},{l1!r},1")
        atomic_write_text(path, "\n".join(lines) + "\n")


class CompositeProblem:
    """Interface solved by :func:`solve`.

    Subclasses define the variable shapes and the smooth loss F (minimized
    over m and delta). ``grad_m`` also returns the F value at the evaluation
    point so the solver can trace the objective without extra passes. When
    ``has_w`` is true, ``grad_w`` returns the gradient of the w-term the
    problem maximizes, consumed by the solver's ascent-sense step.
    """

    lam = 0.0
    m_bound = 1.0
    delta_bound = 255.0
    has_w = False
    w_sense = +1

    def shapes(self):
        raise NotImplementedError

    def init_w(self):
        return None

    def grad_m(self, m, delta, w):
        raise NotImplementedError

    def grad_delta(self, m, delta, w):
        raise NotImplementedError

    def grad_w(self, m, delta, w):
        raise NotImplementedError

    def value(self, m, delta, w):
        return self.grad_m(m, delta, w)[0]


def _materialize(init, shape, rng, scale):
    if isinstance(init, str):
        if init == "random":
            return rng.uniform(0.0, scale, size=shape)
        raise ConfigError(f"unknown init {init!r}")
    arr = np.asarray(init, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape != shape:
        raise ConfigError(f"init shape {arr.shape} does not match variable shape {shape}")
    return arr.copy()


def _composite(problem, f_value, m):
    return f_value + problem.lam * float(np.abs(m).sum())


def _feasible(problem, m, delta, w):
    ok = bool(
        (m >= 0).all() and (m <= problem.m_bound).all()
        and (delta >= 0).all() and (delta <= problem.delta_bound).all()
    )
    if w is not None:
        sums = w.sum(axis=-1)
        ok = ok and bool((w >= 0).all() and np.allclose(sums, 1.0, atol=1e-9))
    return ok


def solve(problem, config):
    """Run the alternating proximal iteration; returns final and best tuples.

    Deterministic given ``config.seed``. Raises NumericalError (with the
    iteration index) if any block gradient goes non-finite.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    shape_m, shape_delta = problem.shapes()
    m = clip_box(_materialize(config.init_m, shape_m, rng, problem.m_bound), 0.0, problem.m_bound)
    delta = clip_box(
        _materialize(config.init_delta, shape_delta, rng, problem.delta_bound),
        0.0, problem.delta_bound,
    )
    w = problem.init_w() if problem.has_w else None
    if w is not None:
        w = project_simplex(np.asarray(w, dtype=np.float64))

    lr = config.lr
    obj_trace = []
    l1_trace = []
    best = None
    no_improve = 0
    small_change = 0
    converged = False
    iterations_run = 0

    def snapshot(obj):
        return PerturbationTuple(
            m=m.copy(), delta=delta.copy(), w=None if w is None else w.copy(),
            objective=obj, feasible=_feasible(problem, m, delta, w),
        )

    for t in range(config.iterations):
        mu_m = lr
        mu_d = lr * config.lr_delta_scale
        mu_w = lr * config.lr_w_scale
        prev_m, prev_delta, prev_w = m, delta, w

        f_at_start = None
        for block in config.block_order:
            if block == "m":
                f_at_start_candidate, g_m = problem.grad_m(m, delta, w)
                if block == config.block_order[0]:
                    f_at_start = f_at_start_candidate
                if not np.isfinite(g_m).all():
                    raise NumericalError(f"non-finite mask gradient at iteration {t}")
                m = prox_l1_box(m - mu_m * g_m, problem.lam * mu_m)
                if problem.m_bound != 1.0:
                    m = clip_box(m, 0.0, problem.m_bound)
            elif block == "delta":
                g_d = problem.grad_delta(m, delta, w)
                if not np.isfinite(g_d).all():
                    raise NumericalError(f"non-finite pattern gradient at iteration {t}")
                delta = clip_box(delta - mu_d * g_d, 0.0, problem.delta_bound)
            elif block == "w" and problem.has_w:
                g_w = problem.grad_w(m, delta, w)
                if not np.isfinite(g_w).all():
                    raise NumericalError(f"non-finite weight gradient at iteration {t}")
                w = project_simplex(w + problem.w_sense * mu_w * g_w)
        if f_at_start is None:
            f_at_start = problem.value(prev_m, prev_delta, prev_w)

        assert _feasible(problem, m, delta, w), f"infeasible iterate at iteration {t}"

        obj = _composite(problem, f_at_start, prev_m)
        obj_trace.append(obj)
        l1_trace.append(float(np.abs(prev_m).sum()))
        if best is None or obj < best.objective - 1e-12:
            best = PerturbationTuple(
                m=prev_m.copy(), delta=prev_delta.copy(),
                w=None if prev_w is None else prev_w.copy(),
                objective=obj, feasible=True,
            )
            no_improve = 0
        else:
            no_improve += 1
            if no_improve >= config.plateau_patience:
                lr *= 0.5
                no_improve = 0

        change = max(
            float(np.abs(m - prev_m).max()),
            float(np.abs(delta - prev_delta).max()) / problem.delta_bound,
            0.0 if w is None else float(np.abs(w - prev_w).max()),
        )
        iterations_run = t + 1
        if change < config.tol:
            small_change += 1
            if small_change >= config.tol_patience:
                converged = True
                break
        else:
            small_change = 0

    final_f = problem.value(m, delta, w)
    final_obj = _composite(problem, final_f, m)
    obj_trace.append(final_obj)
    l1_trace.append(float(np.abs(m).sum()))
    final = snapshot(final_obj)
    if best is None or final_obj < best.objective - 1e-12:
        best = final

    return SolveResult(
        final=final,
        best=best,
        objective_trace=np.asarray(obj_trace),
        mask_l1_trace=np.asarray(l1_trace),
        iterations_run=iterations_run,
        converged_early=converged,
    )

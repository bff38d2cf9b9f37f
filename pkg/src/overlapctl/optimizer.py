"""
Constrained score extremization by projected gradient steps.

Each iteration moves along the component of the score gradient orthogonal
to the constraint gradient, ``f ← f ± ε δP⊥``, then rescales the deviation
of ``f`` from a reference trajectory so that the constraint value is
restored exactly. Steps that fail to improve the score are retried with
half the step size.
"""
import csv
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.optimize import brentq

from .controls import ControlTrajectory, control_energy

__all__ = ['OptimizerConfig', 'OptimizationRun', 'Constraint', 'RestoreError',
           'finite_diff_gradient', 'project_gradient', 'restore_constraint', 'optimize',
           'optimize_restarts', 'el_residual', 'save_history_csv']

log = logging.getLogger(__name__)


class RestoreError(RuntimeError):
    """The constraint could not be restored by rescaling."""


@dataclass
class OptimizerConfig:
    """Settings of one projected-gradient run.

    ``step`` is the fixed ε multiplying the projected gradient. When
    ``step`` is None it is fixed once per run as ``step_length / |δP⊥(f0)|``,
    so the first step moves ``step_length`` in control space.
    """
    direction: str = 'maximize'
    step: Optional[float] = None
    step_length: float = 0.05
    max_iters: int = 200
    grad_tol: float = 1e-10
    el_tol: float = 1e-2
    fd_step: float = 1e-6
    restarts: int = 1
    seed: int = 0
    constraint_drift_tol: float = 1e-3
    restore_tol: float = 1e-6
    max_rejections: int = 20

    def __post_init__(self):
        if self.direction not in ('maximize', 'minimize'):
            raise ValueError(f'direction must be maximize or minimize, got {self.direction!r}')
        for name in ('step_length', 'fd_step', 'grad_tol', 'el_tol', 'constraint_drift_tol',
                     'restore_tol'):
            if getattr(self, name) <= 0:
                raise ValueError(f'{name} must be positive')
        if self.step is not None and self.step <= 0:
            raise ValueError('step must be positive')

    @property
    def sign(self):
        return 1.0 if self.direction == 'maximize' else -1.0


@dataclass
class OptimizationRun:
    config: OptimizerConfig
    initial: ControlTrajectory
    final: ControlTrajectory
    history: List[dict] = field(default_factory=list)
    status: str = 'max_iters'
    el_residual: float = float('nan')
    restart: int = 0

    @property
    def score(self):
        return self.history[-1]['P']

    @property
    def energy(self):
        return self.history[-1]['E']


class Constraint:
    """Constraint functional with a reference trajectory for restoration.

    The reference is the zero-cost path (free evolution for ``modulation``,
    the straight ramp between boundary values for ``speed``).
    """

    def __init__(self, kind, target, h0=None, reference: Optional[ControlTrajectory] = None,
                 basis=None):
        if target < 0:
            raise ValueError('constraint target must be nonnegative')
        self.kind = kind
        self.target = float(target)
        self.h0 = h0
        self.reference = reference
        self.basis = basis

    def __call__(self, traj):
        return control_energy(traj, self.kind, self.h0, self.basis)

    def gradient(self, traj, h=1e-6):
        return finite_diff_gradient(self, traj, h)

    def restore(self, traj, tol=1e-6):
        return restore_constraint(traj, self.target, self, self.reference, tol)

    def drift(self, value):
        return abs(value - self.target) / max(self.target, 1.0)


def finite_diff_gradient(objective: Callable, traj: ControlTrajectory, h=1e-6, order=2):
    """Central differences of ``objective`` w.r.t. each free control value.

    ``order=4`` uses the five-point stencil. Pinned knots get zero gradient.
    """
    if h <= 0:
        raise ValueError('finite-difference step must be positive')
    grad = np.zeros_like(traj.f)
    f = traj.f
    if order == 2:
        stencil = ((1, 0.5), (-1, -0.5))
    elif order == 4:
        stencil = ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12))
    else:
        raise ValueError('order must be 2 or 4')
    for k in np.flatnonzero(traj.free_mask()):
        for l in range(f.shape[1]):
            acc = 0.0
            for shift, coef in stencil:
                g = f.copy()
                g[k, l] += shift * h
                acc += coef * objective(traj.with_f(g))
            grad[k, l] = acc / h
    return grad


def project_gradient(dp, de):
    """Component of ``dp`` orthogonal to ``de``; flag set when ``de`` vanishes."""
    dp = np.asarray(dp, dtype=float)
    de = np.asarray(de, dtype=float)
    nde = float(np.vdot(de, de))
    if nde == 0.0 or not np.isfinite(nde):
        return dp.copy(), True
    return dp - (np.vdot(dp, de) / nde) * de, False


def el_residual(dp, de):
    """``|δP - λ δE| / |δP|`` with ``λ = δP·δE / |δE|²``."""
    norm = np.linalg.norm(dp)
    if norm == 0:
        return 0.0
    perp, _ = project_gradient(dp, de)
    return float(np.linalg.norm(perp) / norm)


def restore_constraint(traj: ControlTrajectory, target, energy: Callable,
                       reference: Optional[ControlTrajectory] = None, tol=1e-6):
    """Rescale the deviation from ``reference`` so that ``energy`` equals ``target``.

    Solves ``energy(ref + α (f - ref)) = target`` for ``α > 0`` by a
    bracketed root search. Raises :class:`RestoreError` when no bracket is
    found or the tolerance cannot be met.
    """
    ref = np.zeros_like(traj.f) if reference is None else reference.f
    dev = traj.f - ref

    def at(alpha):
        return traj.with_f(ref + alpha * dev)

    e_ref = energy(at(0.0))
    if target == 0:
        if abs(e_ref) > tol:
            raise RestoreError('reference trajectory does not have zero cost')
        return at(0.0)
    e_now = energy(traj)
    scale = max(abs(target), 1e-300)
    if abs(e_now - target) <= tol * scale:
        return traj
    if e_ref > target or not np.any(dev):
        raise RestoreError('cannot reach the constraint by rescaling')
    # exact for costs quadratic in the deviation
    if e_now > e_ref:
        alpha = np.sqrt((target - e_ref) / (e_now - e_ref))
        cand = at(alpha)
        if abs(energy(cand) - target) <= tol * scale:
            return cand
    g = lambda a: energy(at(a)) - target  # noqa: E731
    lo, hi = 0.0, 1.0
    for _ in range(60):
        if g(hi) > 0:
            break
        lo, hi = hi, 2 * hi
    else:
        raise RestoreError('failed to bracket the constraint target')
    alpha = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    out = at(alpha)
    if abs(energy(out) - target) > tol * scale:
        raise RestoreError('constraint restoration did not converge')
    return out


def _score_gradient(score, traj, h):
    if hasattr(score, 'fd_gradient'):
        return score.fd_gradient(traj, h)
    return finite_diff_gradient(score, traj, h)


def optimize(config: OptimizerConfig, score: Callable, constraint: Constraint,
             f0: ControlTrajectory, restart=0):
    """Projected-gradient search from ``f0`` (assumed to satisfy the constraint)."""
    sign = config.sign
    f = f0
    p = score(f)
    e = constraint(f)
    if not (np.isfinite(p) and np.isfinite(e)):
        raise FloatingPointError(f'non-finite score {p} or constraint {e} at the initial point')
    if constraint.drift(e) > config.constraint_drift_tol:
        raise ValueError(f'initial trajectory violates the constraint (E={e}, '
                         f'target {constraint.target})')
    run = OptimizationRun(config, f0, f0, restart=restart)
    if constraint.target == 0:
        # only the zero-cost reference path is admissible
        run.history.append(dict(iter=0, P=p, E=e, grad_norm=0.0, step=0.0))
        run.status = 'converged'
        run.el_residual = 0.0
        return run
    base = config.step
    step = base
    for it in range(config.max_iters + 1):
        dp = _score_gradient(score, f, config.fd_step)
        de = constraint.gradient(f, config.fd_step)
        perp, degenerate = project_gradient(dp, de)
        gnorm = float(np.linalg.norm(perp))
        run.el_residual = el_residual(dp, de)
        run.history.append(dict(iter=it, P=p, E=e, grad_norm=gnorm,
                                step=0.0 if step is None else step))
        if not np.isfinite(gnorm):
            raise FloatingPointError(f'non-finite gradient at iteration {it}')
        if gnorm <= config.grad_tol or gnorm <= config.el_tol * np.linalg.norm(dp):
            run.status = 'converged'
            break
        if it == config.max_iters:
            run.status = 'max_iters'
            break
        if base is None:
            base = config.step_length / gnorm
        step = base
        for _ in range(config.max_rejections):
            trial = f.with_f(f.f + sign * step * perp)
            try:
                trial = constraint.restore(trial, config.restore_tol)
            except RestoreError:
                step /= 2
                continue
            pt = score(trial)
            et = constraint(trial)
            if not (np.isfinite(pt) and np.isfinite(et)):
                raise FloatingPointError(f'non-finite score or constraint at iteration {it}')
            if sign * (pt - p) > 0 and constraint.drift(et) <= config.constraint_drift_tol:
                f, p, e = trial, pt, et
                break
            step /= 2
        else:
            run.status = 'stalled'
            break
    run.final = f
    log.debug('run %d finished: %s after %d iterations, P=%g', restart, run.status,
              len(run.history) - 1, p)
    return run


def optimize_restarts(config: OptimizerConfig, score, constraint: Constraint,
                      make_initial: Callable, initial: Optional[ControlTrajectory] = None):
    """Run ``config.restarts`` searches and return ``(best_run, all_runs)``.

    ``make_initial(rng)`` draws a starting trajectory; it is restored onto
    the constraint before use. ``initial``, when given, replaces the draw of
    the first restart.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(max(config.restarts, 1))
    runs = []
    for r, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        f0 = initial if (r == 0 and initial is not None) else make_initial(rng)
        f0 = constraint.restore(f0, config.restore_tol)
        runs.append(optimize(config, score, constraint, f0, restart=r))
    best = max(runs, key=lambda run: config.sign * run.score)
    return best, runs


def save_history_csv(run: OptimizationRun, path):
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(['iter', 'P', 'E', 'grad_norm', 'step'])
        for row in run.history:
            wr.writerow([row['iter'], repr(float(row['P'])), repr(float(row['E'])),
                         repr(float(row['grad_norm'])), repr(float(row['step']))])


def config_dict(config: OptimizerConfig):
    return asdict(config)

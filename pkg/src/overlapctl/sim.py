r"""
Second-order open-system integrators used to validate the overlap scores.

All three methods work in the interaction picture with coupling operators
:math:`S_a(\tau) = U^\dagger(\tau) S_a U(\tau)` and bath correlations
:math:`\Phi_{ab}(\tau - s)`:

* ``dyson2``: the second-order Dyson term acting on the initial state,
* ``tcl2``: the time-local generator
  :math:`\dot\rho = -\sum_a [S_a, C_a\rho] - [S_a, \rho C_a^\dagger]`,
  :math:`C_a(\tau) = \int_0^\tau ds\,\sum_b \Phi_{ab}(\tau-s) S_b(s)`,
* ``nz2``: the memory-kernel equation in which :math:`C_a\rho(\tau)` is
  replaced by :math:`\int_0^\tau ds\,\sum_b\Phi_{ab}(\tau-s)S_b(s)\rho(s)`.

Time stepping is fixed-step RK4 on a grid of ``steps`` intervals; memory
integrals use composite Simpson weights on the half-step grid.
"""
import csv
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .algebra import OperatorBasis, commutator, dagger, generate_basis
from .bath import BathModel, CorrelationPath, correlation_from_spectrum, trapezoid_weights
from .config import TOL, DimensionError, GridMismatchError, ResolutionError, ValidationError
from .controls import ControlTrajectory, RotationPath, hamiltonian_from_propagator, propagator_at

__all__ = ['SimResult', 'coupling_operators', 'dyson2_score', 'dyson2_integrate',
           'tcl2_integrate', 'nz2_integrate', 'ground_overlap_trace', 'linear_entropy',
           'auto_steps', 'simpson_weights', 'save_sim_csv']

log = logging.getLogger(__name__)

MAX_PHASE_STEP = 0.1


def linear_entropy(rho, k=None):
    """``k (1 - Tr ρ²)`` with ``k = d/(d-1)`` by default; vectorized over leading axes."""
    rho = np.asarray(rho)
    d = rho.shape[-1]
    k = d / (d - 1) if k is None else k
    return k * (1 - np.real(np.einsum('...ab,...ba->...', rho, rho)))


@dataclass
class SimResult:
    """Schrödinger-picture states ``rho`` at times ``tau``; ``rho_int`` in the interaction picture."""
    tau: np.ndarray
    rho: np.ndarray
    rho_int: np.ndarray
    method: str

    @property
    def overlap(self):
        return ground_overlap_trace(self)

    @property
    def s_l(self):
        return linear_entropy(self.rho)

    @property
    def delta_s_l(self):
        s = self.s_l
        return float(s[-1] - s[0])

    def check(self, trace_tol=1e-8, herm_tol=1e-10, pos_tol=1e-6):
        tr = np.abs(np.einsum('kaa->k', self.rho) - 1).max()
        herm = np.abs(self.rho - dagger(self.rho)).max()
        mins = np.linalg.eigvalsh((self.rho + dagger(self.rho)) / 2)[:, 0].min()
        if tr > trace_tol or herm > herm_tol or mins < -pos_tol:
            raise ValidationError(f'{self.method}: trace error {tr:.3g}, Hermiticity error '
                                  f'{herm:.3g}, min eigenvalue {mins:.3g}')
        return True


def ground_overlap_trace(result: SimResult):
    """``⟨0|ρ(τ)|0⟩``; the ground state is the last basis vector (ordering ``{|1⟩, |0⟩}``)."""
    return np.real(result.rho[:, -1, -1]).copy()


def coupling_operators(u, basis: OperatorBasis):
    """``S_a(τ) = U†(τ) S_a U(τ)`` for every time, shape ``(M, n, d, d)``."""
    u = np.asarray(u)
    return dagger(u)[:, None] @ basis.ops[None] @ u[:, None]


def dyson2_score(rho0, p_hat, rot: RotationPath, corr: CorrelationPath, t=None, basis=None):
    r"""``Tr(P̂ Δρ)`` of the second-order Dyson term on the knots of ``rot``.

    Uses :math:`S_a(\tau_i) = \sum_b \epsilon_{ab}(\tau_i) S_b` and the
    time-ordered double integral

    .. math::

        \Delta\rho = -\int_0^t dt_1\int_0^{t_1} dt_2 \sum_{ab}
        \Phi_{ab}(t_1-t_2)[S_a(t_1), S_b(t_2)\rho_0] + \mathrm{h.c.},

    with trapezoidal weights (half weight on the diagonal).
    """
    rho0 = np.asarray(rho0, dtype=complex)
    p_hat = np.asarray(p_hat, dtype=complex)
    basis = basis or generate_basis(rho0.shape[0])
    if rot.eps.shape[-1] != len(basis) or corr.n != len(basis):
        raise DimensionError('rotation path, bath and basis sizes differ')
    if t is not None and abs(rot.t - t) > 1e-9 * max(t, 1):
        raise GridMismatchError(f'rotation path spans {rot.t}, expected {t}')
    n_t = len(rot.tau)
    n_int = n_t - 1
    s = np.einsum('kab,bxy->kaxy', rot.eps, basis.ops)
    # M_a(τ_i) = ρ0 [P̂, S_a(τ_i)]
    m = rho0 @ commutator(p_hat, s)
    # T[j, i, b, a] = Tr(S_b(τ_j) M_a(τ_i))
    tr = np.einsum('jbxy,iayx->jiba', s, m)
    phi = corr.lags(rot.dtau, n_int)
    i, j = np.tril_indices(n_t)
    w = trapezoid_weights(n_t, rot.dtau)
    wij = w[i] * w[j] * np.where(i == j, 0.5, 1.0)
    total = np.einsum('p,pab,pba->', wij, phi[i - j + n_int], tr[j, i])
    return float(-2 * total.real)


def simpson_weights(n, step):
    """Composite Simpson weights for ``n`` equally spaced samples.

    An odd number of intervals closes with the 3/8 rule on the last three;
    two samples fall back to the trapezoid.
    """
    w = np.zeros(n)
    if n < 2:
        return w
    if n == 2:
        return trapezoid_weights(2, step)
    intervals = n - 1
    tail = 3 if intervals % 2 else 0
    head = intervals - tail
    if head:
        w[:head + 1:2] += 2 * step / 3
        w[1:head:2] += 4 * step / 3
        w[0] -= step / 3
        w[head] -= step / 3
    if tail:
        w[head:] += 3 * step / 8 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def _correlation_for(corr, h_half, count):
    if isinstance(corr, BathModel):
        corr = correlation_from_spectrum(corr, dt=h_half, t_max=count * h_half,
                                         check_resolution=False)
    return corr.lags(h_half, count)


def _max_phase(traj, steps, basis):
    h = traj.t / steps
    u = propagator_at(traj, np.linspace(0, traj.t, 2 * steps + 1), basis)
    ham, _ = hamiltonian_from_propagator(u, h / 2, basis)
    return float(np.abs(np.linalg.eigvalsh(ham)).max() * h)


def auto_steps(traj: ControlTrajectory, basis=None, max_phase=MAX_PHASE_STEP, minimum=None):
    """Smallest step count found with ``max ‖H_S‖ Δτ <= max_phase`` (at least the knot count)."""
    steps = minimum or traj.n_intervals
    for _ in range(50):
        phase = _max_phase(traj, steps, basis)
        if phase <= max_phase:
            return steps
        steps = int(np.ceil(steps * phase / max_phase * 1.01))
    raise ResolutionError('could not find a step count resolving the control Hamiltonian')


class _Setup:
    def __init__(self, rho0, traj, corr, t, steps, basis, memory_window, check_step):
        self.rho0 = np.asarray(rho0, dtype=complex)
        d = self.rho0.shape[0]
        self.basis = basis or generate_basis(d)
        if traj.dim != d:
            raise DimensionError('state and trajectory dimensions differ')
        t = traj.t if t is None else float(t)
        if abs(t - traj.t) > 1e-9 * max(t, 1):
            raise GridMismatchError(f'trajectory spans {traj.t}, expected {t}')
        steps = steps or auto_steps(traj, self.basis)
        self.steps = int(steps)
        self.h = t / self.steps
        self.count = 2 * self.steps
        self.tau_half = np.linspace(0, t, self.count + 1)
        self.u = propagator_at(traj, self.tau_half, self.basis)
        if check_step:
            phase = _max_phase(traj, self.steps, self.basis)
            if phase > MAX_PHASE_STEP * (1 + 1e-9):
                raise ResolutionError(f'step {self.h:.4g} too large: ‖H_S‖Δτ = {phase:.3g} > '
                                      f'{MAX_PHASE_STEP} (use at least '
                                      f'{auto_steps(traj, self.basis)} steps)')
        self.s = coupling_operators(self.u, self.basis)
        self.phi = _correlation_for(corr, self.h / 2, self.count)
        if self.phi.shape[-1] != len(self.basis):
            raise DimensionError('bath channels and operator basis differ')
        if memory_window is None:
            self.window = self.count
        else:
            self.window = max(1, int(round(memory_window / (self.h / 2))))

    def memory(self, m, v_hist):
        """``Σ_k q_k Σ_b Φ_ab(τ_m - τ_k) v_b(τ_k)`` over the (windowed) past."""
        lo = max(0, m - self.window)
        if m == lo:
            return np.zeros((len(self.basis),) + v_hist.shape[-2:], dtype=complex)
        q = simpson_weights(m - lo + 1, self.h / 2)
        k = np.arange(lo, m + 1)
        return kernels.memory_contract(self.phi[m - k + self.count], v_hist[lo:m + 1], q)

    def finish(self, rho_int, method):
        u = self.u[::2]
        rho = u @ rho_int @ dagger(u)
        return SimResult(self.tau_half[::2].copy(), rho, rho_int, method)


def _generator(s, c, rho):
    """``-Σ_a [S_a, c_a ρ] - [S_a, ρ c_a†]`` written as ``-(X + X†)``."""
    x = np.einsum('axy,ayz->xz', s, c @ rho) - np.einsum('axy,ayz->xz', c @ rho, s)
    return -(x + dagger(x))


def _generator_nz(s, w):
    x = np.einsum('axy,ayz->xz', s, w) - np.einsum('axy,ayz->xz', w, s)
    return -(x + dagger(x))


def _rk4(setup: _Setup, rhs):
    h = setup.h
    rho = setup.rho0.copy()
    out = np.empty((setup.steps + 1,) + rho.shape, dtype=complex)
    out[0] = rho
    for n in range(setup.steps):
        m = 2 * n
        k1 = rhs(m, rho)
        k2 = rhs(m + 1, rho + 0.5 * h * k1)
        k3 = rhs(m + 1, rho + 0.5 * h * k2)
        k4 = rhs(m + 2, rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = (rho + dagger(rho)) / 2
        out[n + 1] = rho
    return out


def _check_rho0(rho0):
    rho0 = np.asarray(rho0, dtype=complex)
    if abs(np.trace(rho0) - 1) > TOL.state_trace or np.abs(rho0 - dagger(rho0)).max() > 1e-12:
        raise ValidationError('initial state must be a Hermitian unit-trace matrix')


def tcl2_integrate(rho0, traj: ControlTrajectory, corr, t=None, steps=None,
                   basis: Optional[OperatorBasis] = None, memory_window=None, check_step=True):
    """Time-convolutionless second-order master equation.

    ``corr`` is a :class:`CorrelationPath` whose step divides ``Δτ/2`` or a
    :class:`BathModel` (transformed on the half-step grid). ``steps=None``
    picks the smallest step count passing the resolution check.
    """
    _check_rho0(rho0)
    st = _Setup(rho0, traj, corr, t, steps, basis, memory_window, check_step)
    c = np.array([st.memory(m, st.s) for m in range(st.count + 1)])
    rho_int = _rk4(st, lambda m, rho: _generator(st.s[m], c[m], rho))
    return st.finish(rho_int, 'tcl2')


def nz2_integrate(rho0, traj: ControlTrajectory, corr, t=None, steps=None,
                  basis: Optional[OperatorBasis] = None, memory_window=None, check_step=True):
    """Nakajima-Zwanzig second-order master equation with explicit memory.

    The history ``S_b(s)ρ(s)`` is kept on the half-step grid. Midpoint
    states come from cubic Hermite interpolation between accepted steps;
    inside a step the current RK stage supplies the newest history entries.
    """
    _check_rho0(rho0)
    st = _Setup(rho0, traj, corr, t, steps, basis, memory_window, check_step)
    h = st.h
    d = st.rho0.shape[0]
    hist = np.zeros((st.count + 1, len(st.basis), d, d), dtype=complex)
    s = st.s

    def rhs(m, rho, mid=None):
        hist[m] = s[m] @ rho
        if mid is not None:
            hist[m - 1] = s[m - 1] @ mid
        return _generator_nz(s[m], st.memory(m, hist))

    rho = st.rho0.copy()
    out = np.empty((st.steps + 1, d, d), dtype=complex)
    out[0] = rho
    for n in range(st.steps):
        m = 2 * n
        k1 = rhs(m, rho)
        y2 = rho + 0.5 * h * k1
        k2 = rhs(m + 1, y2)
        y3 = rho + 0.5 * h * k2
        k3 = rhs(m + 1, y3)
        k4 = rhs(m + 2, rho + h * k3, mid=y3)
        new = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        new = (new + dagger(new)) / 2
        f1 = rhs(m + 2, new, mid=y3)
        mid = (rho + new) / 2 + h * (k1 - f1) / 8
        hist[m + 1] = s[m + 1] @ ((mid + dagger(mid)) / 2)
        hist[m + 2] = s[m + 2] @ new
        rho = new
        out[n + 1] = rho
    return st.finish(out, 'nz2')


def dyson2_integrate(rho0, traj: ControlTrajectory, corr, t=None, steps=None,
                     basis: Optional[OperatorBasis] = None, memory_window=None, check_step=True):
    """Second-order Dyson state ``ρ0 + Δρ(τ)`` for every step time.

    ``Δρ(τ)`` integrates the time-local generator applied to the fixed
    initial state (Simpson's rule on each step).
    """
    _check_rho0(rho0)
    st = _Setup(rho0, traj, corr, t, steps, basis, memory_window, check_step)
    rates = np.array([_generator(st.s[m], st.memory(m, st.s), st.rho0)
                      for m in range(st.count + 1)])
    inc = st.h / 6 * (rates[:-1:2] + 4 * rates[1::2] + rates[2::2])
    rho_int = st.rho0[None] + np.concatenate([np.zeros((1,) + st.rho0.shape), np.cumsum(inc, 0)])
    return st.finish(rho_int, 'dyson2')


def save_sim_csv(result: SimResult, path):
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(['tau', 'overlap', 'S_L', 'method'])
        for tau, ov, sl in zip(result.tau, result.overlap, result.s_l):
            wr.writerow([repr(float(tau)), repr(float(ov)), repr(float(sl)), result.method])

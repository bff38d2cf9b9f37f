r"""
Control trajectories, propagators, toggling-frame rotations and their spectra.

A qubit trajectory is parametrized by Euler angles on a uniform knot grid,

.. math::

    U(\tau) = e^{-\frac{i}{2}f_3\sigma_3}\,e^{-\frac{i}{2}f_2\sigma_2}\,
              e^{-\frac{i}{2}f_1\sigma_3},

with piecewise-linear interpolation between knots. For ``d > 2`` the
control vector holds the coefficients of :math:`H_S` in the operator basis
and the propagator is built by a product of midpoint exponentials.
"""
import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .algebra import SIGMA_Z, OperatorBasis, dagger, expand, generate_basis
from .bath import _chunks, trapezoid_weights
from .config import TOL, DimensionError, GridMismatchError, ValidationError

__all__ = ['ControlTrajectory', 'RotationPath', 'SystemSpectrum', 'euler_unitary',
           'propagator_from_euler', 'propagator_from_hamiltonian', 'propagator',
           'propagator_at', 'hamiltonian_from_propagator', 'integrate_hamiltonian',
           'rotation_path', 'rotations_from_unitaries', 'system_spectrum', 'control_energy',
           'free_trajectory', 'random_smooth_trajectory', 'save_trajectory_csv',
           'load_trajectory_csv', 'save_spectrum_csv']


@dataclass(frozen=True)
class ControlTrajectory:
    """Control values ``f`` of shape ``(N+1, m)`` on knots ``τ_k = k t/N``.

    ``kind`` is ``'euler'`` (qubit Euler angles, m = 3) or ``'hamiltonian'``
    (coefficients of ``H_S`` in the operator basis). ``pin_end`` marks the
    final knot as fixed (gate boundary condition); the first knot is always
    fixed.
    """
    t: float
    f: np.ndarray
    kind: str = 'euler'
    dim: int = 2
    pin_end: bool = False

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 2 or len(f) < 2:
            raise DimensionError(f'control array must be (N+1, m) with N >= 1, got {f.shape}')
        if self.kind == 'euler' and (self.dim != 2 or f.shape[1] != 3):
            raise DimensionError('Euler parametrization needs d = 2 and three angles')
        if self.kind == 'hamiltonian' and f.shape[1] != self.dim ** 2 - 1:
            raise DimensionError(f'need {self.dim ** 2 - 1} Hamiltonian coefficients per knot')
        if self.kind not in ('euler', 'hamiltonian'):
            raise ValueError(f'unknown control kind {self.kind!r}')
        if self.t <= 0:
            raise ValidationError('total time must be positive')
        object.__setattr__(self, 'f', f)

    @property
    def n_intervals(self):
        return len(self.f) - 1

    @property
    def dtau(self):
        return self.t / self.n_intervals

    @property
    def tau(self):
        return np.linspace(0.0, self.t, len(self.f))

    def with_f(self, f):
        return replace(self, f=np.asarray(f, dtype=float))

    def free_mask(self):
        """Boolean mask of the knots the optimizer may vary."""
        mask = np.ones(len(self.f), dtype=bool)
        mask[0] = False
        if self.pin_end:
            mask[-1] = False
        return mask

    def interpolate(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.stack([np.interp(tau, self.tau, self.f[:, l]) for l in range(self.f.shape[1])],
                        axis=-1)


@dataclass(frozen=True)
class RotationPath:
    """Toggling-frame rotation matrices ``ε(τ_k)``, shape ``(N+1, n, n)``."""
    tau: np.ndarray
    eps: np.ndarray

    @property
    def t(self):
        return float(self.tau[-1] - self.tau[0])

    @property
    def dtau(self):
        return self.t / (len(self.tau) - 1)

    def orthogonality_error(self):
        n = self.eps.shape[-1]
        return float(np.abs(np.swapaxes(self.eps, -1, -2) @ self.eps - np.eye(n)).max())


@dataclass(frozen=True)
class SystemSpectrum:
    """Finite-time spectra ``ε_t(ω)``, shape ``(len(omega), n, n)``."""
    omega: np.ndarray
    eps_t: np.ndarray
    t: float

    @property
    def weights(self):
        return trapezoid_weights(len(self.omega), self.omega[1] - self.omega[0])

    def completeness(self):
        """``(1/t) ∫ dω ε_t†(ω) ε_t(ω)``; the identity up to quadrature error."""
        m = np.einsum('w,wji,wjk->ik', self.weights, self.eps_t.conj(), self.eps_t)
        return m / self.t


def euler_unitary(f1, f2, f3):
    """ZYZ Euler product, vectorized over the angle arrays."""
    f1, f2, f3 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (f1, f2, f3)))
    c, s = np.cos(f2 / 2), np.sin(f2 / 2)
    a = np.exp(-0.5j * (f1 + f3))
    b = np.exp(-0.5j * (f3 - f1))
    u = np.empty(f1.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c * a
    u[..., 0, 1] = -s * b
    u[..., 1, 0] = s * np.conj(b)
    u[..., 1, 1] = c * np.conj(a)
    return u


def propagator_from_euler(traj: ControlTrajectory):
    if traj.kind != 'euler':
        raise DimensionError('propagator_from_euler needs an Euler-angle trajectory')
    return euler_unitary(traj.f[:, 0], traj.f[:, 1], traj.f[:, 2])


def propagator_from_hamiltonian(traj: ControlTrajectory, basis: Optional[OperatorBasis] = None):
    """Time-ordered product of midpoint exponentials of the knot Hamiltonians."""
    basis = basis or generate_basis(traj.dim)
    h = np.einsum('kj,jab->kab', traj.f, basis.ops)
    return integrate_hamiltonian(h, traj.dtau)


def integrate_hamiltonian(h, dtau):
    """``U_{k+1} = exp(-i Δτ (H_k + H_{k+1})/2) U_k`` starting from the identity."""
    d = h.shape[-1]
    u = np.empty((len(h), d, d), dtype=complex)
    u[0] = np.eye(d)
    for k in range(len(h) - 1):
        u[k + 1] = expm(-0.5j * dtau * (h[k] + h[k + 1])) @ u[k]
    return u


def propagator(traj: ControlTrajectory, basis: Optional[OperatorBasis] = None):
    if traj.kind == 'euler':
        return propagator_from_euler(traj)
    return propagator_from_hamiltonian(traj, basis)


def propagator_at(traj: ControlTrajectory, tau, basis: Optional[OperatorBasis] = None):
    """Propagator at arbitrary times (piecewise-linear controls)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if traj.kind == 'euler':
        f = traj.interpolate(tau)
        return euler_unitary(f[:, 0], f[:, 1], f[:, 2])
    # generic: refine the knot grid so every requested time is a knot
    basis = basis or generate_basis(traj.dim)
    fine = np.union1d(traj.tau, tau)
    coeff = traj.interpolate(fine)
    h = np.einsum('kj,jab->kab', coeff, basis.ops)
    d = traj.dim
    u = np.empty((len(fine), d, d), dtype=complex)
    u[0] = np.eye(d)
    for k in range(len(fine) - 1):
        u[k + 1] = expm(-0.5j * (fine[k + 1] - fine[k]) * (h[k] + h[k + 1])) @ u[k]
    return u[np.searchsorted(fine, tau)]


def hamiltonian_from_propagator(u, dtau, basis: Optional[OperatorBasis] = None):
    """``H_S = i (dU/dτ) U†`` by second-order finite differences.

    Returns the Hermitized Hamiltonians and their basis coefficients
    ``ω_j = Tr(H_S S_j)/d``.
    """
    u = np.asarray(u)
    if len(u) < 3:
        raise ValidationError('need at least three knots to differentiate the propagator')
    du = np.gradient(u, dtau, axis=0, edge_order=2)
    h = 1j * du @ dagger(u)
    h = (h + dagger(h)) / 2
    basis = basis or generate_basis(u.shape[-1])
    return h, np.real(expand(h, basis))


def rotations_from_unitaries(u, basis: OperatorBasis):
    """``ε_jk = Tr(U† S_j U S_k)/d`` without validation."""
    s_t = dagger(u)[:, None] @ basis.ops[None] @ u[:, None]
    eps = np.einsum('kjab,lba->kjl', s_t, basis.ops) / basis.dim
    return eps


def rotation_path(u, basis: OperatorBasis, tau=None):
    u = np.asarray(u)
    if u.shape[-1] != basis.dim:
        raise DimensionError('propagator and basis dimensions differ')
    eps = rotations_from_unitaries(u, basis)
    imag = np.abs(eps.imag).max()
    if imag > TOL.rotation_real:
        raise ValidationError(f'rotation matrix has imaginary part {imag:.3g}; '
                              'is the propagator unitary?')
    if tau is None:
        tau = np.arange(len(u), dtype=float)
    path = RotationPath(np.asarray(tau, dtype=float), np.ascontiguousarray(eps.real))
    err = path.orthogonality_error()
    if err > TOL.orthogonal:
        raise ValidationError(f'rotation path not orthogonal (error {err:.3g})')
    return path


def system_spectrum(rot: RotationPath, t, omega):
    """Trapezoidal ``ε_t(ω) = (2π)^{-1/2} Σ_k w_k e^{iωτ_k} ε(τ_k)``."""
    omega = np.asarray(omega, dtype=float)
    if omega.size == 0:
        raise GridMismatchError('empty frequency grid')
    if abs(rot.t - t) > 1e-9 * max(t, 1.0):
        raise GridMismatchError(f'rotation path spans {rot.t}, expected {t}')
    w = trapezoid_weights(len(rot.tau), rot.dtau)
    n = rot.eps.shape[-1]
    flat = rot.eps.reshape(len(rot.tau), -1)
    eps_t = np.empty((len(omega), n * n), dtype=complex)
    for lo, hi in _chunks(len(omega), len(rot.tau)):
        eps_t[lo:hi] = (np.exp(1j * np.outer(omega[lo:hi], rot.tau)) * w) @ flat
    eps_t = eps_t.reshape(len(omega), n, n)
    return SystemSpectrum(omega, eps_t / np.sqrt(2 * np.pi), float(t))


def _euler_omega0(h0):
    """ω0 if ``h0 = (ω0/2)σ3`` (or None), else ``False``."""
    if h0 is None:
        return None
    if np.isscalar(h0):
        return float(h0)
    h0 = np.asarray(h0, dtype=complex)
    if h0.shape != (2, 2):
        return False
    w0 = float(np.real(h0[0, 0] - h0[1, 1]))
    if np.abs(h0 - 0.5 * w0 * SIGMA_Z).max() > 1e-14 * max(1.0, abs(w0)):
        return False
    return w0


def _sinc_cos(a, b):
    """Mean of cos over a linear ramp from ``a`` to ``b``."""
    d = b - a
    small = np.abs(d) < 1e-6
    safe = np.where(small, 1.0, d)
    exact = (np.sin(b) - np.sin(a)) / safe
    approx = np.cos((a + b) / 2) * (1 - d ** 2 / 24)
    return np.where(small, approx, exact)


def control_energy(traj: ControlTrajectory, kind='speed', h0=None, basis=None, method='auto'):
    r"""Constraint functional of a trajectory.

    ``speed``: :math:`\int d\tau \sum_l \dot f_l^2`, exact for piecewise-linear
    controls.

    ``modulation``: :math:`\frac12\int d\tau\,\mathrm{Tr}(H_S - H_0)^2`. For
    Euler angles with ``h0 = (ω0/2)σ3`` (``h0`` may be given as the scalar
    ω0) the closed form in the angle rates is used, integrated exactly on
    each linear segment; ``method='generic'`` forces the finite-difference
    route through :func:`hamiltonian_from_propagator`.
    """
    df = np.diff(traj.f, axis=0)
    dt = traj.dtau
    if kind == 'speed':
        return float((df ** 2).sum() / dt)
    if kind != 'modulation':
        raise ValueError(f'unknown constraint kind {kind!r}')
    if h0 is None:
        raise ValidationError('modulation energy needs the unmodulated Hamiltonian H0')
    w0 = _euler_omega0(h0) if traj.kind == 'euler' else False
    if traj.kind == 'euler' and w0 is not False and method != 'generic':
        r1, r2, r3 = (df / dt).T
        cbar = _sinc_cos(traj.f[:-1, 1], traj.f[1:, 1])
        seg = r1 ** 2 + r2 ** 2 + (r3 - w0) ** 2 + 2 * r1 * (r3 - w0) * cbar
        return float(0.25 * seg.sum() * dt)
    d = traj.dim
    basis = basis or generate_basis(d)
    if np.isscalar(h0):
        h0 = 0.5 * float(h0) * SIGMA_Z
    if traj.kind == 'euler':
        h, _ = hamiltonian_from_propagator(propagator(traj), dt, basis)
    else:
        h = np.einsum('kj,jab->kab', traj.f, basis.ops)
    dh = h - np.asarray(h0)
    integrand = 0.5 * np.real(np.einsum('kab,kba->k', dh, dh))
    return float(np.sum(trapezoid_weights(len(integrand), dt) * integrand))


def free_trajectory(t, n_intervals, omega0=0.0, pin_end=False, end=None):
    """Euler trajectory of free precession ``U = exp(-i ω0 τ σ3/2)``.

    With ``end`` given, the angles are instead ramped linearly from zero to
    ``end`` (the minimal-speed path between pinned boundary values).
    """
    tau = np.linspace(0, t, n_intervals + 1)
    f = np.zeros((n_intervals + 1, 3))
    if end is not None:
        f = np.outer(tau / t, np.asarray(end, dtype=float))
    else:
        f[:, 2] = omega0 * tau
    return ControlTrajectory(t, f, 'euler', 2, pin_end)


def random_smooth_trajectory(rng, t, n_intervals, n_params=3, n_modes=4, pin_end=False,
                             reference=None, amplitude=1.0, kind='euler', dim=2):
    """Low-frequency random deviation added to ``reference`` (default zero).

    The deviation vanishes at τ = 0 (and at τ = t when ``pin_end``).
    """
    tau = np.linspace(0, t, n_intervals + 1)
    k = np.arange(1, n_modes + 1)
    phase = k if pin_end else k - 0.5
    modes = np.sin(np.pi * np.outer(tau / t, phase))
    coeff = rng.standard_normal((n_modes, n_params)) * amplitude / k[:, None]
    dev = modes @ coeff
    base = np.zeros_like(dev) if reference is None else np.asarray(reference, dtype=float)
    return ControlTrajectory(t, base + dev, kind, dim, pin_end)


def save_trajectory_csv(traj: ControlTrajectory, path):
    m = traj.f.shape[1]
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(['tau'] + [f'f_{l + 1}' for l in range(m)])
        for tau, row in zip(traj.tau, traj.f):
            wr.writerow([repr(float(tau))] + [repr(float(v)) for v in row])


def load_trajectory_csv(path, kind='euler', dim=2, pin_end=False):
    with open(path, newline='') as fh:
        rows = list(csv.reader(fh))
    if rows[0][0] != 'tau':
        raise ValidationError(f'{path}: first column must be tau')
    data = np.array(rows[1:], dtype=float)
    tau = data[:, 0]
    if abs(tau[0]) > 1e-12 or np.ptp(np.diff(tau)) > 1e-9 * tau[-1]:
        raise ValidationError(f'{path}: knots must be uniform and start at zero')
    return ControlTrajectory(float(tau[-1]), data[:, 1:], kind, dim, pin_end)


def save_spectrum_csv(spec: SystemSpectrum, path):
    """``omega`` plus real and imaginary parts of each flattened entry."""
    n = spec.eps_t.shape[-1]
    header = ['omega']
    for j in range(n):
        for k in range(n):
            header += [f'Re_{j + 1}{k + 1}', f'Im_{j + 1}{k + 1}']
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for w, m in zip(spec.omega, spec.eps_t):
            row = [repr(float(w))]
            for v in m.ravel():
                row += [repr(float(v.real)), repr(float(v.imag))]
            wr.writerow(row)

r"""
Second-order scores as overlaps of system and bath dynamics.

For a gradient operator :math:`\hat P` and initial state :math:`\rho_0` the
matrix :math:`\Gamma_{kj} = \mathrm{Tr}(\rho_0[S_j,\hat P]S_k)` carries all
state dependence. The score change over ``[0, t]`` is evaluated either in
the time domain,

.. math::

    P = \iint_0^t dt_1 dt_2\,
        \mathrm{Tr}[\epsilon^T(t_1)\Phi(t_1-t_2)\epsilon(t_2)\Gamma],

or as the spectral overlap :math:`P = t\int d\omega\,\mathrm{Tr}[F_t G]`
with :math:`F_t = \epsilon_t\Gamma\epsilon_t^\dagger/t`. Both use the same
trapezoidal discretization, so they agree to rounding error when the
correlation function is the discrete inverse transform of the sampled
spectrum.
"""
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .algebra import OperatorBasis, commutator, dagger, generate_basis, hermitian_split, is_hermitian, psd_split
from .bath import BathModel, CorrelationPath, trapezoid_weights
from .config import TOL, DimensionError, GridMismatchError, ImaginaryResidueError, ValidationError
from .controls import (ControlTrajectory, RotationPath, SystemSpectrum, euler_unitary,
                       propagator, rotations_from_unitaries)

__all__ = ['ScoreSpec', 'ScoreReport', 'qubit_mixture', 'validate_state', 'gradient_operator',
           'make_score_spec', 'gamma_matrix', 'averaged_gamma', 'prerotate_to_commuting',
           'haar_states', 'haar_average_pair', 'haar_average_pair_mc', 'haar_gamma_mc',
           'correlation_lags', 'score_timedomain', 'score_spectral', 'system_spectral_matrix',
           'gate_error', 'gate_error_timedomain', 'score_bounds', 'score_noncommuting',
           'score_noncommuting_split', 'score_noncommuting_spectral', 'TimeDomainScore']

KINDS = ('expectation', 'purity', 'linear_entropy', 'fidelity', 'gate_error')


def qubit_mixture(p):
    """``p|1⟩⟨1| + (1-p)|0⟩⟨0|`` in the ordering ``{|1⟩, |0⟩}``."""
    return np.diag([p, 1 - p]).astype(complex)


def validate_state(rho, tol=TOL.state_trace):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError('density matrix must be square')
    if not is_hermitian(rho):
        raise ValidationError('density matrix is not Hermitian')
    if abs(np.trace(rho) - 1) > tol:
        raise ValidationError(f'density matrix trace {np.trace(rho).real:.15g} != 1')
    if np.linalg.eigvalsh((rho + dagger(rho)) / 2)[0] < -tol:
        raise ValidationError('density matrix is not positive semi-definite')
    return rho


def gradient_operator(kind, rho0, q=None, k=None, psi=None):
    """Gradient operator of a score with respect to the state.

    ``expectation`` → ``q``; ``purity`` → ``2ρ0``; ``linear_entropy`` →
    ``-2kρ0`` with default ``k = d/(d-1)``; ``fidelity`` → ``|ψ⟩⟨ψ|``.
    """
    rho0 = validate_state(rho0)
    d = rho0.shape[0]
    if kind == 'expectation':
        if q is None:
            raise ValidationError('expectation score needs an observable')
        q = np.asarray(q, dtype=complex)
        if not is_hermitian(q):
            raise ValidationError('observable must be Hermitian')
        return q
    if kind == 'purity':
        return 2 * rho0
    if kind == 'linear_entropy':
        k = d / (d - 1) if k is None else k
        return -2 * k * rho0
    if kind == 'fidelity':
        if psi is None:
            raise ValidationError('fidelity score needs a target state')
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return np.outer(psi, psi.conj())
    raise ValueError(f'unknown score kind {kind!r}')


@dataclass(frozen=True)
class ScoreSpec:
    kind: str
    rho0: np.ndarray
    p_hat: Optional[np.ndarray]
    gamma: np.ndarray
    commuting: bool
    basis: OperatorBasis = field(repr=False)


def make_score_spec(kind, rho0=None, basis=None, **extra):
    """Assemble the gradient operator and Γ matrix for a score kind.

    ``gate_error`` uses the Haar-averaged ``Γ̄ = -(d/(d+1)) I``; its value is
    reported as the positive error ``-P``.
    """
    if kind == 'gate_error':
        d = basis.dim if basis is not None else (2 if rho0 is None else np.shape(rho0)[0])
        basis = basis or generate_basis(d)
        rho = np.eye(d, dtype=complex) / d if rho0 is None else validate_state(rho0)
        return ScoreSpec(kind, rho, None, averaged_gamma(d), True, basis)
    rho0 = validate_state(rho0)
    basis = basis or generate_basis(rho0.shape[0])
    p_hat = gradient_operator(kind, rho0, **extra)
    comm = np.abs(commutator(rho0, p_hat)).max() <= TOL.commuting
    return ScoreSpec(kind, rho0, p_hat, gamma_matrix(rho0, p_hat, basis), bool(comm), basis)


def gamma_matrix(rho0, p_hat, basis: OperatorBasis):
    """``Γ_kj = Tr(ρ0 [S_j, P̂] S_k)``."""
    rho0 = np.asarray(rho0, dtype=complex)
    p_hat = np.asarray(p_hat, dtype=complex)
    if rho0.shape != p_hat.shape or rho0.shape[0] != basis.dim:
        raise DimensionError('state, gradient operator and basis dimensions differ')
    c = commutator(basis.ops, p_hat)
    return np.einsum('ab,jbc,kca->kj', rho0, c, basis.ops)


def averaged_gamma(d):
    return -(d / (d + 1)) * np.eye(d * d - 1, dtype=complex)


def prerotate_to_commuting(rho0, p_hat):
    """Unitary ``V`` such that ``V ρ0 V†`` is diagonal in the eigenbasis of ``P̂``.

    Eigenvalues of both operators are paired in ascending order. Returns
    ``(V ρ0 V†, V)``.
    """
    _, wr = np.linalg.eigh(np.asarray(rho0, dtype=complex))
    _, wp = np.linalg.eigh(np.asarray(p_hat, dtype=complex))
    v = wp @ dagger(wr)
    return v @ rho0 @ dagger(v), v


def haar_states(rng, d, n):
    z = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_average_pair(a, b, d=None):
    """Closed-form Haar average of ``⟨ψ|A|ψ⟩⟨ψ|B|ψ⟩``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionError('operators must be square with equal dimensions')
    d = a.shape[0] if d is None else d
    return (np.trace(a @ b) + np.trace(a) * np.trace(b)) / (d * (d + 1))


def haar_average_pair_mc(a, b, samples, rng):
    psi = haar_states(rng, np.shape(a)[0], samples)
    ea = np.einsum('si,ij,sj->s', psi.conj(), a, psi)
    eb = np.einsum('si,ij,sj->s', psi.conj(), b, psi)
    return np.mean(ea * eb)


def haar_gamma_mc(basis: OperatorBasis, samples, rng, chunk=20000):
    """Monte-Carlo average of Γ over Haar-random pure states with ``P̂ = ρ0``."""
    total = np.zeros((len(basis), len(basis)), dtype=complex)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        psi = haar_states(rng, basis.dim, m)
        # Γ_kj = ⟨S_j⟩⟨S_k⟩ - ⟨S_j S_k⟩ for ρ0 = P̂ = |ψ⟩⟨ψ|
        ex = np.einsum('si,jik,sk->sj', psi.conj(), basis.ops, psi)
        prod = np.einsum('jab,kbc->jkac', basis.ops, basis.ops)
        ex2 = np.einsum('si,jkil,sl->sjk', psi.conj(), prod, psi)
        total += np.einsum('sj,sk->kj', ex, ex) - np.swapaxes(ex2, 1, 2).sum(axis=0)
        done += m
    return total / samples


def _check_real(value, what):
    scale = max(1.0, abs(value.real))
    if abs(value.imag) > TOL.imag_residue * scale:
        raise ImaginaryResidueError(f'{what} has imaginary residue {value.imag:.3g}')
    return float(value.real)


def correlation_lags(corr: CorrelationPath, rot: RotationPath):
    """Correlation at every knot lag ``-N..N`` of ``rot`` (index ``l + N``)."""
    n = len(rot.tau) - 1
    return corr.lags(rot.dtau, n)


def _knot_weights(rot: RotationPath):
    return trapezoid_weights(len(rot.tau), rot.dtau)


def _check_dims(rot, gamma, n_bath):
    n = rot.eps.shape[-1]
    if gamma.shape != (n, n) or n_bath != n:
        raise DimensionError(f'rotation ({n}), Γ {gamma.shape} and bath ({n_bath}) disagree')


def _double_sum(rot, corr, gamma, ordered):
    gamma = np.asarray(gamma, dtype=complex)
    _check_dims(rot, gamma, corr.n)
    lags = correlation_lags(corr, rot)
    x, _ = kernels.overlap_fields(rot.eps, lags, gamma, _knot_weights(rot), ordered, False)
    return np.einsum('iba,iba->', rot.eps, x)


def score_timedomain(rot: RotationPath, corr: CorrelationPath, gamma, t=None):
    """Double trapezoidal sum of ``Tr[R(t1,t2) Γ]`` over ``[0,t]²``."""
    if t is not None and abs(rot.t - t) > 1e-9 * max(t, 1):
        raise GridMismatchError(f'rotation path spans {rot.t}, expected {t}')
    if not is_hermitian(np.asarray(gamma, dtype=complex), tol=1e-10) and np.any(gamma):
        raise ValidationError('Γ is not Hermitian (non-commuting score); '
                              'use score_noncommuting')
    return _check_real(_double_sum(rot, corr, gamma, False), 'time-domain score')


def system_spectral_matrix(sys: SystemSpectrum, gamma):
    """``F_t(ω) = ε_t Γ ε_t† / t``."""
    return sys.eps_t @ np.asarray(gamma, dtype=complex) @ dagger(sys.eps_t) / sys.t


def _check_omega(sys, omega):
    if len(sys.omega) != len(omega) or np.abs(sys.omega - omega).max() > 1e-9 * max(
            1.0, np.abs(omega).max()):
        raise GridMismatchError('system and bath spectra use different frequency grids')


def score_spectral(sys: SystemSpectrum, bath: BathModel, gamma, t=None):
    """``P = t ∫ dω Tr[F_t(ω) G(ω)]`` by the trapezoidal rule."""
    _check_omega(sys, bath.omega)
    gamma = np.asarray(gamma, dtype=complex)
    if gamma.shape != (bath.n, bath.n) or sys.eps_t.shape[-1] != bath.n:
        raise DimensionError('Γ, system spectrum and bath dimensions disagree')
    f = system_spectral_matrix(sys, gamma)
    val = sys.t * np.einsum('w,wab,wba->', bath.weights, f, bath.spectrum)
    return _check_real(val, 'spectral score')


def gate_error(sys: SystemSpectrum, bath: BathModel, d, psd_check=True):
    """Haar-averaged gate error ``d/(d+1) ∫ dω Tr[ε_t ε_t† G]``."""
    if psd_check:
        from .bath import check_psd
        rep = check_psd(bath)
        if not rep.passed:
            raise ValidationError(f'bath spectrum not PSD (min eigenvalue {rep.min_eigenvalue:.3g})')
    return -score_spectral(sys, bath, averaged_gamma(d))


def gate_error_timedomain(rot: RotationPath, corr: CorrelationPath, d):
    return -score_timedomain(rot, corr, averaged_gamma(d))


def score_bounds(gamma, bath: BathModel, t):
    """``(-P2, P1)`` with ``P_i = t · sup Tr G · Tr Γ_i`` for ``Γ = Γ1 - Γ2``."""
    s = bath.sup_trace()
    if not np.isfinite(s):
        raise ValidationError('bath spectrum trace is unbounded')
    g1, g2 = psd_split(np.asarray(gamma, dtype=complex), tol=1e-10)
    return (-t * s * float(np.trace(g2).real), t * s * float(np.trace(g1).real))


def score_noncommuting(rot: RotationPath, corr: CorrelationPath, gamma, t=None):
    """``P̃ = 2 Re ∫_0^t dt1 ∫_0^t1 dt2 Tr[R(t1,t2) Γ]`` (time-ordered triangle)."""
    if t is not None and abs(rot.t - t) > 1e-9 * max(t, 1):
        raise GridMismatchError(f'rotation path spans {rot.t}, expected {t}')
    return float(2 * _double_sum(rot, corr, gamma, True).real)


def score_noncommuting_split(rot: RotationPath, corr: CorrelationPath, gamma):
    """Same value as :func:`score_noncommuting` via the (skew-)Hermitian parts.

    Evaluates ``2 ∬_{t2<t1} Tr[R₊Γ₊ + R₋Γ₋]`` pair by pair; quadratic in
    memory, intended for checks on short grids.
    """
    gamma = np.asarray(gamma, dtype=complex)
    _check_dims(rot, gamma, corr.n)
    n = len(rot.tau)
    lags = correlation_lags(corr, rot)
    w = _knot_weights(rot)
    i, j = np.tril_indices(n)
    wij = w[i] * w[j] * np.where(i == j, 0.5, 1.0)
    r = np.swapaxes(rot.eps[i], -1, -2) @ lags[i - j + n - 1] @ rot.eps[j]
    rp, rm = hermitian_split(r)
    gp, gm = hermitian_split(gamma)
    tr = np.einsum('pab,ba->p', rp, gp) + np.einsum('pab,ba->p', rm, gm)
    return _check_real(2 * np.sum(wij * tr), 'split non-commuting score')


def score_noncommuting_spectral(sys: SystemSpectrum, causal, gamma):
    """``P̃ = 2t Re ∫ dω Tr[F_t(ω) 𝒢(ω)]`` with ``causal`` sampled on ``sys.omega``."""
    causal = np.asarray(causal)
    if causal.shape[0] != len(sys.omega):
        raise GridMismatchError('causal spectrum and system spectrum grids differ')
    f = system_spectral_matrix(sys, gamma)
    w = trapezoid_weights(len(sys.omega), sys.omega[1] - sys.omega[0])
    return float(2 * sys.t * np.einsum('w,wab,wba->', w, f, causal).real)


@dataclass
class ScoreReport:
    p_time: float
    p_spectral: float
    p_tilde: float
    bound_lo: float
    bound_hi: float
    gate_error: Optional[float] = None
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def within_bounds(self, tol=1e-12):
        slack = tol * max(1.0, abs(self.bound_lo), abs(self.bound_hi))
        return self.bound_lo - slack <= self.p_spectral <= self.bound_hi + slack


class TimeDomainScore:
    """Score of Euler or generic trajectories on a fixed knot grid.

    Evaluates the commuting double sum (or twice the real part of the
    time-ordered sum when ``ordered``), times ``sign``. ``fd_gradient``
    computes central differences with respect to every control value;
    for Euler trajectories a perturbation at knot ``k`` only changes
    ``ε(τ_k)``, so each difference is obtained from a rank-one update of
    the double sum instead of a full re-evaluation.
    """

    def __init__(self, gamma, corr: CorrelationPath, basis: OperatorBasis, t, n_intervals,
                 ordered=False, sign=1.0):
        self.gamma = np.asarray(gamma, dtype=complex)
        self.basis = basis
        self.t = float(t)
        self.n_intervals = int(n_intervals)
        self.ordered = bool(ordered)
        self.sign = float(sign)
        self.dtau = self.t / self.n_intervals
        self.w = trapezoid_weights(self.n_intervals + 1, self.dtau)
        self.lags = corr.lags(self.dtau, self.n_intervals)
        if corr.n != len(basis):
            raise DimensionError('bath channels and operator basis differ')
        self.factor = 2.0 if ordered else 1.0

    def _eps(self, traj):
        return np.ascontiguousarray(rotations_from_unitaries(propagator(traj, self.basis),
                                                             self.basis).real)

    def _raw(self, eps, want_y=False):
        return kernels.overlap_fields(eps, self.lags, self.gamma, self.w, self.ordered, want_y)

    def value_from_eps(self, eps):
        x, _ = self._raw(eps)
        return self.sign * self.factor * float(np.einsum('iba,iba->', eps, x).real)

    def __call__(self, traj: ControlTrajectory):
        return self.value_from_eps(self._eps(traj))

    def fd_gradient(self, traj: ControlTrajectory, h=1e-6):
        """Central-difference gradient, shape of ``traj.f``; pinned knots get zero."""
        mask = traj.free_mask()
        if traj.kind != 'euler':
            from .optimizer import finite_diff_gradient
            return finite_diff_gradient(self, traj, h)
        eps = self._eps(traj)
        x, y = self._raw(eps, want_y=True)
        free = np.flatnonzero(mask)
        f = traj.f[free]
        m = f.shape[1]
        # perturbed angles: (2 signs, m params, knots, 3)
        pert = np.broadcast_to(f, (2, m) + f.shape).copy()
        for l in range(m):
            pert[0, l, :, l] += h
            pert[1, l, :, l] -= h
        u = euler_unitary(pert[..., 0], pert[..., 1], pert[..., 2])
        shp = u.shape[:-2]
        eps_p = rotations_from_unitaries(u.reshape(-1, 2, 2), self.basis).real
        eps_p = eps_p.reshape(shp + eps.shape[1:])
        delta = eps_p - eps[free]
        wkk = self.w[free] ** 2 * (0.5 if self.ordered else 1.0)
        phi0 = self.lags[self.n_intervals]
        d_val = (np.einsum('slkba,kba->slk', delta, x[free])
                 + np.einsum('kab,slkba->slk', y[free], delta)
                 + wkk * np.einsum('slkba,bc,slkcd,da->slk', delta, phi0, delta, self.gamma))
        d_val = self.sign * self.factor * d_val.real
        grad = np.zeros_like(traj.f)
        grad[free] = ((d_val[0] - d_val[1]) / (2 * h)).T
        return grad

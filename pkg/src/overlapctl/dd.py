"""
Periodic and Uhrig dynamical decoupling with ideal π-pulses.

A π-pulse about Pauli axis ``a`` conjugates every basis operator that
anticommutes with ``σ_a`` to its negative, so the toggling-frame rotation
is diagonal with entries ``±1`` that flip at each pulse.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .algebra import OperatorBasis, generate_basis
from .config import ResolutionError, ValidationError
from .controls import RotationPath, system_spectrum

__all__ = ['PulseSequence', 'pdd_sequence', 'udd_sequence', 'toggling_signs', 'toggling_path',
           'dd_spectrum', 'dd_spectrum_exact', 'main_peak', 'low_frequency_weight',
           'save_dd_csv']


@dataclass(frozen=True)
class PulseSequence:
    n: int
    t: float
    timings: np.ndarray
    axis: int = 1
    label: str = ''

    def __post_init__(self):
        tm = np.asarray(self.timings, dtype=float)
        if len(tm) != self.n:
            raise ValidationError('number of timings differs from pulse count')
        if len(tm) and (tm[0] <= 0 or tm[-1] >= self.t or np.any(np.diff(tm) <= 0)):
            raise ValidationError('pulse timings must increase strictly inside (0, t)')
        if self.axis not in (1, 2, 3):
            raise ValidationError('pulse axis must be a Pauli index 1, 2 or 3')
        object.__setattr__(self, 'timings', tm)


def _check_n(n):
    if int(n) != n or n < 0:
        raise ValueError(f'pulse count must be a nonnegative integer, got {n}')


def pdd_sequence(n, t, axis=1):
    """Equidistant pulses ``τ_j = j t/(n+1)``."""
    _check_n(n)
    j = np.arange(1, n + 1)
    return PulseSequence(int(n), float(t), j * t / (n + 1), axis, f'PDD{n}')


def udd_sequence(n, t, axis=1):
    """Uhrig timings ``τ_j = t sin²(πj/(2n+2))``."""
    _check_n(n)
    j = np.arange(1, n + 1)
    return PulseSequence(int(n), float(t), t * np.sin(np.pi * j / (2 * n + 2)) ** 2, axis,
                         f'UDD{n}')


def _flip_mask(axis, basis: OperatorBasis):
    """True for basis operators that anticommute with the pulse operator."""
    pulse = np.array([[0, 1], [1, 0]], complex) if axis == 1 else (
        np.array([[0, -1j], [1j, 0]]) if axis == 2 else np.diag([1.0, -1.0]).astype(complex))
    anti = pulse[None] @ basis.ops + basis.ops @ pulse[None]
    return np.abs(anti).max(axis=(1, 2)) < 1e-12


def toggling_signs(seq: PulseSequence, tau):
    """``(-1)^(number of pulses before τ)``; zero exactly at a pulse."""
    tau = np.asarray(tau, dtype=float)
    before = np.searchsorted(seq.timings, tau, side='left')
    after = np.searchsorted(seq.timings, tau, side='right')
    return 0.5 * ((-1.0) ** before + (-1.0) ** after)


def toggling_path(seq: PulseSequence, basis: OperatorBasis = None, n_intervals=4000):
    """Piecewise-constant diagonal ``ε(τ)`` sampled on ``n_intervals`` knots.

    A knot falling exactly on a pulse takes the mean of both sides, which
    keeps the trapezoidal rule exact for the jump.
    """
    basis = basis or generate_basis(2)
    if basis.dim != 2:
        raise ValidationError('π-pulse toggling is defined for qubits')
    tau = np.linspace(0, seq.t, n_intervals + 1)
    s = toggling_signs(seq, tau)
    flip = _flip_mask(seq.axis, basis)
    diag = np.where(flip[None, :], s[:, None], 1.0)
    eps = np.zeros((len(tau), 3, 3))
    idx = np.arange(3)
    eps[:, idx, idx] = diag
    return RotationPath(tau, eps)


def dd_spectrum(seq: PulseSequence, omega, channel=3, n_intervals=4000, check_grid=True):
    """``F(ω) = |ε_t(ω)_cc|²/t`` of one channel through the trapezoidal transform."""
    omega = np.asarray(omega, dtype=float)
    if check_grid and np.abs(omega).max() < 4 * np.pi * max(seq.n, 1) / seq.t * (1 - 1e-12):
        raise ResolutionError('frequency grid does not cover the main peak '
                              f'(need cutoff >= {4 * np.pi * max(seq.n, 1) / seq.t:.4g})')
    rot = toggling_path(seq, n_intervals=n_intervals)
    sys = system_spectrum(rot, seq.t, omega)
    c = channel - 1
    return np.abs(sys.eps_t[:, c, c]) ** 2 / seq.t


def dd_spectrum_exact(seq: PulseSequence, omega, channel=3):
    """Closed-form ``F(ω)`` for a ``±1`` step function (reference values)."""
    omega = np.asarray(omega, dtype=float)
    flip = _flip_mask(seq.axis, generate_basis(2))[channel - 1]
    edges = np.concatenate([[0.0], seq.timings if flip else [], [seq.t]])
    signs = (-1.0) ** np.arange(len(edges) - 1)
    small = np.abs(omega) < 1e-12
    w = np.where(small, 1.0, omega)
    e = np.exp(1j * np.outer(w, edges))
    seg = (e[:, 1:] - e[:, :-1]) / (1j * w[:, None])
    seg[small] = np.diff(edges)[None, :]
    amp = seg @ signs / np.sqrt(2 * np.pi)
    return np.abs(amp) ** 2 / seq.t


def main_peak(omega, f):
    """Frequency of the largest value of ``f`` at ``ω > 0``."""
    omega = np.asarray(omega)
    pos = omega > 0
    return float(omega[pos][np.argmax(np.asarray(f)[pos])])


def low_frequency_weight(omega, f, cutoff):
    """Trapezoidal integral of ``f`` over ``|ω| <= cutoff``."""
    omega = np.asarray(omega)
    sel = np.abs(omega) <= cutoff
    return float(trapezoid(np.asarray(f)[sel], omega[sel]))


def save_dd_csv(omega, spectra, path):
    """Write ``omega,F,F_norm`` for one spectrum, or named column pairs for a dict.

    ``F_norm`` is ``F`` scaled to unit peak height.
    """
    if isinstance(spectra, dict):
        names = list(spectra)
        header = ['omega']
        for name in names:
            header += [f'F_{name}', f'F_{name}_norm']
        arrays = [np.asarray(spectra[k]) for k in names]
    else:
        header = ['omega', 'F', 'F_norm']
        arrays = [np.asarray(spectra)]
    cols = []
    for f in arrays:
        peak = f.max()
        cols += [f, f / peak if peak > 0 else f]
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i, w in enumerate(omega):
            wr.writerow([repr(float(w))] + [repr(float(c[i])) for c in cols])

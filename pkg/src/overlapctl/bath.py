r"""
Bath spectra and correlation functions.

Conventions
-----------
The bath spectral matrix and correlation matrix are a Fourier pair

.. math::

    G(\omega) = \int dt\, e^{i\omega t}\Phi(t), \qquad
    \Phi(t) = \frac{1}{2\pi}\int d\omega\, e^{-i\omega t} G(\omega),

both discretized with the trapezoidal rule on uniform grids. The causal
(half-line) spectrum is :math:`\mathcal{G}(\omega) = \int_0^\infty dt\,
e^{i\omega t}\Phi(t)`, whose Hermitian part is :math:`G/2`.
"""
import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .algebra import dagger
from .config import TOL, DimensionError, GridMismatchError, ResolutionError, ValidationError

__all__ = ['BathModel', 'CorrelationPath', 'PsdReport', 'symmetric_grid', 'trapezoid_weights',
           'make_lorentzian_bath', 'lorentzian_shape', 'correlation_from_spectrum',
           'causal_spectrum', 'check_psd', 'save_bath_csv', 'load_bath_csv']


def trapezoid_weights(n, step):
    w = np.full(n, float(step))
    if n > 1:
        w[0] = w[-1] = step / 2
    else:
        w[:] = 0.0
    return w


def symmetric_grid(cutoff, step):
    """Uniform grid on ``[-cutoff, cutoff]`` with an even number of intervals.

    The step is adjusted downward so the grid closes exactly on both ends
    and contains zero.
    """
    if cutoff <= 0 or step <= 0:
        raise ValueError('cutoff and step must be positive')
    half = int(np.ceil(cutoff / step - 1e-9))
    return np.linspace(-cutoff, cutoff, 2 * half + 1)


def _chunks(n_rows, n_cols, budget=1 << 22):
    """Row blocks keeping a dense ``rows x n_cols`` kernel under ``budget`` entries."""
    step = max(1, budget // max(n_cols, 1))
    return [(lo, min(lo + step, n_rows)) for lo in range(0, n_rows, step)]


def _grid_step(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise GridMismatchError('grid needs at least two points')
    d = np.diff(grid)
    if np.ptp(d) > 1e-9 * max(abs(d[0]), 1.0):
        raise GridMismatchError('grid is not uniform')
    return float(d.mean())


@dataclass(frozen=True)
class BathModel:
    """Sampled bath spectral matrix ``G(ω)``, shape ``(len(omega), n, n)``.

    ``spectrum`` already includes the overall ``coupling_strength`` factor.
    ``feature_width`` is the narrowest spectral feature (used for grid
    resolution checks) or ``None`` when unknown.
    """
    omega: np.ndarray
    spectrum: np.ndarray
    coupling_strength: float = 1.0
    feature_width: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.spectrum)
        if g.ndim != 3 or g.shape[1] != g.shape[2] or g.shape[0] != len(self.omega):
            raise DimensionError(f'spectrum shape {g.shape} incompatible with '
                                 f'{len(self.omega)} frequencies')

    @property
    def n(self):
        return self.spectrum.shape[1]

    @property
    def domega(self):
        return _grid_step(self.omega)

    @property
    def cutoff(self):
        return float(self.omega[-1])

    @property
    def weights(self):
        return trapezoid_weights(len(self.omega), self.domega)

    @property
    def is_diagonal(self):
        off = self.spectrum.copy()
        idx = np.arange(self.n)
        off[:, idx, idx] = 0
        return not np.any(off)

    def trace(self):
        return np.real(np.einsum('wjj->w', self.spectrum))

    def sup_trace(self):
        return float(self.trace().max(initial=0.0))

    def scaled(self, factor):
        return BathModel(self.omega, self.spectrum * factor, self.coupling_strength * factor,
                         self.feature_width, dict(self.params))

    def diagonal(self):
        return np.real(np.einsum('wjj->wj', self.spectrum))

    @classmethod
    def from_function(cls, omega, func, coupling_strength=1.0, feature_width=None):
        """Build a bath by sampling ``func(ω) -> (n, n)`` on ``omega``."""
        omega = np.asarray(omega, dtype=float)
        g = np.array([np.asarray(func(w), dtype=complex) for w in omega])
        return cls(omega, coupling_strength * g, coupling_strength, feature_width)


@dataclass(frozen=True)
class CorrelationPath:
    """Correlation matrices ``Φ(t)`` on a uniform grid symmetric about zero."""
    times: np.ndarray
    values: np.ndarray

    @property
    def dt(self):
        return _grid_step(self.times)

    @property
    def t_max(self):
        return float(self.times[-1])

    @property
    def center(self):
        return len(self.times) // 2

    @property
    def n(self):
        return self.values.shape[1]

    def window_ratio(self):
        """``max|Φ(±T)| / max|Φ(0)|``; small when the window captures the decay."""
        zero = np.abs(self.values[self.center]).max()
        if zero == 0:
            return 0.0
        edge = max(np.abs(self.values[0]).max(), np.abs(self.values[-1]).max())
        return float(edge / zero)

    def lags(self, dt, count):
        """Return ``Φ(k·dt)`` for ``k = -count..count`` as shape ``(2count+1, n, n)``.

        ``dt`` must be an integer multiple of the path step and the window
        must cover ``count·dt``.
        """
        ratio = dt / self.dt
        stride = int(round(ratio))
        if stride < 1 or abs(ratio - stride) > 1e-8 * max(ratio, 1.0):
            raise GridMismatchError(f'lag step {dt} is not a multiple of the correlation step '
                                    f'{self.dt}')
        c = self.center
        if count * stride > c:
            raise GridMismatchError(f'correlation window {self.t_max} shorter than '
                                    f'required lag {count * dt}')
        return self.values[c - count * stride:c + count * stride + 1:stride]


@dataclass(frozen=True)
class PsdReport:
    passed: bool
    min_eigenvalue: float
    offending: np.ndarray
    sup_trace: float


def lorentzian_shape(omega, center, width, weight, tail_weight=0.0, tail_width=1.0):
    """Lorentzian peak at ``center`` plus a Lorentzian tail centred at zero."""
    omega = np.asarray(omega, dtype=float)
    g = np.zeros_like(omega)
    if weight:
        g = g + weight * width ** 2 / ((omega - center) ** 2 + width ** 2)
    if tail_weight:
        g = g + tail_weight * tail_width ** 2 / (omega ** 2 + tail_width ** 2)
    return g


def make_lorentzian_bath(center, width, weight, tail_weight=0.0, tail_width=1.0, cutoff=None,
                         domega=None, channel_mask: Sequence[float] = (1, 1, 1),
                         coupling_strength=1.0, omega=None):
    """Diagonal bath with a Lorentzian peak and low-frequency Lorentzian tail.

    ``channel_mask`` entries multiply the shape per channel, so zero entries
    switch a channel off. Either ``omega`` or ``cutoff`` and ``domega`` must be
    given.
    """
    if min(width, tail_width) < 0 or weight < 0 or tail_weight < 0:
        raise ValidationError('Lorentzian widths and weights must be nonnegative')
    if np.any(np.asarray(channel_mask) < 0):
        raise ValidationError('channel weights must be nonnegative')
    if omega is None:
        if cutoff is None or domega is None:
            raise ValueError('need omega grid or cutoff and domega')
        if cutoff <= center:
            raise ValidationError(f'cutoff {cutoff} must exceed the peak centre {center}')
        omega = symmetric_grid(cutoff, domega)
    else:
        omega = np.asarray(omega, dtype=float)
        if omega[-1] <= center:
            raise ValidationError('grid cutoff must exceed the peak centre')
    shape = lorentzian_shape(omega, center, width, weight, tail_weight, tail_width)
    mask = np.asarray(channel_mask, dtype=float)
    g = np.zeros((len(omega), len(mask), len(mask)), dtype=complex)
    idx = np.arange(len(mask))
    g[:, idx, idx] = coupling_strength * shape[:, None] * mask[None, :]
    widths = [w for w, a in ((width, weight), (tail_width, tail_weight)) if a > 0 and w > 0]
    params = dict(center=center, width=width, weight=weight, tail_weight=tail_weight,
                  tail_width=tail_width, channel_mask=[float(m) for m in mask])
    return BathModel(omega, g, coupling_strength, min(widths) if widths else None, params)


def correlation_from_spectrum(bath: BathModel, dt=None, t_max=None, check_resolution=True):
    """Inverse transform ``Φ(t) = (1/2π) Σ_ω w_ω e^{-iωt} G(ω)``.

    Defaults: ``dt = π/Ω`` and ``t_max = π/Δω`` (the grid conjugate to the
    frequency grid).
    """
    domega = bath.domega
    if check_resolution and bath.feature_width and domega > bath.feature_width / 10 * (1 + 1e-9):
        raise ResolutionError(f'frequency step {domega:.4g} does not resolve spectral width '
                              f'{bath.feature_width:.4g} (need step <= width/10)')
    if dt is None:
        dt = np.pi / bath.cutoff
    if t_max is None:
        t_max = np.pi / domega
    k = int(np.ceil(t_max / dt - 1e-9))
    times = dt * np.arange(-k, k + 1)
    w = bath.weights
    flat = bath.spectrum.reshape(len(bath.omega), -1)
    values = np.empty((len(times), flat.shape[1]), dtype=complex)
    for lo, hi in _chunks(len(times), len(bath.omega)):
        kernel = np.exp(-1j * np.outer(times[lo:hi], bath.omega)) * w
        values[lo:hi] = kernel @ flat
    values /= 2 * np.pi
    return CorrelationPath(times, values.reshape(len(times), bath.n, bath.n))


def causal_spectrum(corr: CorrelationPath, omega, decay_tol=1e-3):
    """Half-line transform ``𝒢(ω) = ∫_0^T dt e^{iωt} Φ(t)`` by the trapezoidal rule."""
    ratio = corr.window_ratio()
    if ratio > decay_tol:
        raise ResolutionError(f'correlation does not decay inside the window '
                              f'(edge/peak = {ratio:.3g})')
    c = corr.center
    times = corr.times[c:]
    vals = corr.values[c:]
    v = trapezoid_weights(len(times), corr.dt)
    omega = np.asarray(omega, dtype=float)
    flat = vals.reshape(len(times), -1)
    out = np.empty((len(omega), flat.shape[1]), dtype=complex)
    for lo, hi in _chunks(len(omega), len(times)):
        kernel = np.exp(1j * np.outer(omega[lo:hi], times)) * v
        out[lo:hi] = kernel @ flat
    return out.reshape(len(omega), corr.n, corr.n)


def check_psd(bath: BathModel, tol=TOL.psd):
    g = (bath.spectrum + dagger(bath.spectrum)) / 2
    eig = np.linalg.eigvalsh(g)
    mins = eig[:, 0]
    scale = np.abs(bath.spectrum).max(initial=0.0)
    bad = mins < -tol * scale
    return PsdReport(bool(not bad.any()), float(mins.min(initial=np.inf)), bath.omega[bad],
                     bath.sup_trace())


def save_bath_csv(bath: BathModel, path):
    n = bath.n
    header = ['omega'] + [f'G_{j + 1}{j + 1}' for j in range(n)]
    offdiag = not bath.is_diagonal
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)] if offdiag else []
    for j, k in pairs:
        header += [f'Re_{j + 1}{k + 1}', f'Im_{j + 1}{k + 1}']
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i, w in enumerate(bath.omega):
            g = bath.spectrum[i]
            row = [repr(float(w))] + [repr(float(g[j, j].real)) for j in range(n)]
            for j, k in pairs:
                row += [repr(float(g[j, k].real)), repr(float(g[j, k].imag))]
            wr.writerow(row)


def load_bath_csv(path, coupling_strength=1.0):
    """Read a bath CSV; values are multiplied by ``coupling_strength``."""
    with open(path, newline='') as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    if header[0] != 'omega':
        raise ValidationError(f'{path}: first column must be omega')
    diag = [h for h in header if h.startswith('G_')]
    n = len(diag)
    g = np.zeros((len(data), n, n), dtype=complex)
    for j in range(n):
        g[:, j, j] = data[:, header.index(f'G_{j + 1}{j + 1}')]
    for j in range(n):
        for k in range(j + 1, n):
            key = f'Re_{j + 1}{k + 1}'
            if key in header:
                val = data[:, header.index(key)] + 1j * data[:, header.index(f'Im_{j + 1}{k + 1}')]
                g[:, j, k] = val
                g[:, k, j] = np.conj(val)
    return BathModel(data[:, 0], coupling_strength * g, coupling_strength, None,
                     dict(source=str(path)))

r"""
Dense operator algebra for small Hilbert spaces.

The traceless Hermitian basis returned by :func:`generate_basis` is a
generalized Gell-Mann set rescaled so that

.. math::

    \mathrm{Tr}(S_j S_k) = d\,\delta_{jk},

which for :math:`d = 2` reproduces the Pauli matrices.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .config import TOL, DimensionError, NotHermitianError

__all__ = ['OperatorBasis', 'generate_basis', 'pauli', 'commutator', 'dagger',
           'is_hermitian', 'hermitian_split', 'psd_split', 'expand', 'reconstruct']

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def pauli():
    """Return the Pauli matrices as an array of shape (3, 2, 2)."""
    return np.array([SIGMA_X, SIGMA_Y, SIGMA_Z])


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _square(a):
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f'expected square matrix, got shape {a.shape}')
    return a


def is_hermitian(a, tol=TOL.hermitian):
    a = _square(a)
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    return np.abs(a - dagger(a)).max(initial=0.0) <= tol * scale


@dataclass(frozen=True)
class OperatorBasis:
    """Ordered traceless Hermitian basis with ``Tr(S_j S_k) = d δ_jk``."""
    dim: int
    ops: np.ndarray

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def __getitem__(self, item):
        return self.ops[item]

    def gram(self):
        return np.einsum('jab,kba->jk', self.ops, self.ops)


def generate_basis(d: int) -> OperatorBasis:
    """Generalized Gell-Mann basis of dimension ``d``.

    Ordering: symmetric off-diagonal pairs, antisymmetric pairs, then the
    diagonal operators. Each operator is scaled by ``sqrt(d/2)`` relative to
    the usual Gell-Mann normalization.
    """
    if int(d) != d or d < 2:
        raise DimensionError(f'basis dimension must be an integer >= 2, got {d}')
    d = int(d)
    sym, anti, diag = [], [], []
    for m in range(d):
        for n in range(m + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[m, n] = s[n, m] = 1
            sym.append(s)
            a = np.zeros((d, d), dtype=complex)
            a[m, n] = -1j
            a[n, m] = 1j
            anti.append(a)
    for l in range(1, d):
        z = np.zeros((d, d), dtype=complex)
        z[np.arange(l), np.arange(l)] = 1
        z[l, l] = -l
        diag.append(np.sqrt(2 / (l * (l + 1))) * z)
    ops = np.array(sym + anti + diag) * np.sqrt(d / 2)
    return OperatorBasis(d, ops)


def commutator(a, b):
    a, b = _square(a), _square(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f'dimension mismatch: {a.shape} vs {b.shape}')
    return a @ b - b @ a


def hermitian_split(a) -> Tuple[np.ndarray, np.ndarray]:
    """Split ``a`` into its Hermitian and skew-Hermitian parts."""
    a = _square(a)
    ad = dagger(a)
    return (a + ad) / 2, (a - ad) / 2


def psd_split(g, tol=TOL.hermitian):
    """Decompose Hermitian ``g = g1 - g2`` with both parts positive semi-definite."""
    g = _square(g)
    if not is_hermitian(g, tol=max(tol, 1e-12)):
        raise NotHermitianError('psd_split requires a Hermitian matrix')
    g = (g + dagger(g)) / 2
    w, v = np.linalg.eigh(g)
    pos = np.clip(w, 0, None)
    neg = np.clip(-w, 0, None)
    g1 = (v * pos) @ dagger(v)
    g2 = (v * neg) @ dagger(v)
    return g1, g2


def expand(a, basis: OperatorBasis):
    """Coefficients ``c_j = Tr(a S_j)/d`` of ``a`` in ``basis``."""
    return np.einsum('...ab,jba->...j', a, basis.ops) / basis.dim


def reconstruct(c, basis: OperatorBasis):
    return np.einsum('...j,jab->...ab', c, basis.ops)

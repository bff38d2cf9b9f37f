"""Kernel dispatch: the compiled core when importable, else the numpy fallback.

Set ``OVERLAPCTL_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

__all__ = ['BACKEND', 'overlap_fields', 'memory_contract', 'get_backend']

_compiled = None
if not os.environ.get('OVERLAPCTL_PURE_PYTHON'):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = 'compiled' if _compiled is not None else 'python'


def get_backend(name=None):
    """Return the kernel module for ``name`` ('compiled', 'python' or None for default)."""
    name = name or BACKEND
    if name == 'python':
        return _kernels_py
    if _compiled is None:
        raise ImportError('compiled kernels are not available; build the extension first')
    return _compiled


def overlap_fields(eps, phi, gamma, w, ordered=False, want_y=True, backend=None):
    mod = get_backend(backend)
    return mod.overlap_fields(np.ascontiguousarray(eps, dtype=float),
                              np.ascontiguousarray(phi, dtype=complex),
                              np.ascontiguousarray(gamma, dtype=complex),
                              np.ascontiguousarray(w, dtype=float), bool(ordered), bool(want_y))


def memory_contract(phi_hist, v_hist, q, backend=None):
    mod = get_backend(backend)
    return mod.memory_contract(np.ascontiguousarray(phi_hist, dtype=complex),
                               np.ascontiguousarray(v_hist, dtype=complex),
                               np.ascontiguousarray(q, dtype=float))

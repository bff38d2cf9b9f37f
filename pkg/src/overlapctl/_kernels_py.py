"""Pure numpy implementations of the hot kernels (fallback for the compiled core)."""
import numpy as np

__all__ = ['pair_weights_diag', 'overlap_fields', 'memory_contract']


def pair_weights_diag(w, lag, ordered):
    """Weights ``W[i, i-lag]`` for all valid ``i``."""
    n = len(w)
    if lag >= 0:
        wd = w[lag:] * w[:n - lag]
    else:
        wd = w[:n + lag] * w[-lag:]
    if ordered:
        if lag < 0:
            return wd * 0.0
        if lag == 0:
            return wd * 0.5
    return wd


def overlap_fields(eps, phi, gamma, w, ordered=False, want_y=True):
    """Sensitivity fields of the double sum ``Σ_ij W_ij Tr[ε_iᵀ Φ_{i-j} ε_j Γ]``.

    ``phi[l + N - 1]`` holds the correlation at lag ``l = i - j``. Returns
    ``X_i = Σ_j W_ij Φ_{i-j} ε_j Γ`` and ``Y_j = Σ_i W_ij Γ ε_iᵀ Φ_{i-j}``.
    """
    eps = np.asarray(eps, dtype=float)
    n = len(eps)
    m = eps @ gamma
    lt = gamma @ np.swapaxes(eps, -1, -2)
    x = np.zeros(eps.shape, dtype=complex)
    y = np.zeros(eps.shape, dtype=complex) if want_y else None
    lo = 0 if ordered else -(n - 1)
    for lag in range(lo, n):
        wd = pair_weights_diag(w, lag, ordered)[:, None, None]
        p = phi[lag + n - 1]
        if lag >= 0:
            x[lag:] += wd * (p @ m[:n - lag])
            if want_y:
                y[:n - lag] += wd * (lt[lag:] @ p)
        else:
            x[:n + lag] += wd * (p @ m[-lag:])
            if want_y:
                y[-lag:] += wd * (lt[:n + lag] @ p)
    return x, y


def memory_contract(phi_hist, v_hist, q):
    """``out[a] = Σ_s q_s Σ_b phi_hist[s, a, b] v_hist[s, b]`` for matrix-valued ``v``."""
    return np.einsum('s,sab,sbij->aij', q, phi_hist, v_hist)

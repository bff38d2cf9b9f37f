# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def overlap_fields(double[:, :, ::1] eps, double complex[:, :, ::1] phi,
                   double complex[:, ::1] gamma, double[::1] w, bint ordered=False,
                   bint want_y=True):
    cdef Py_ssize_t n = eps.shape[0], d = eps.shape[1]
    cdef Py_ssize_t i, j, a, b, c, lag
    cdef double wij
    cdef double complex acc
    m_arr = np.zeros((n, d, d), dtype=complex)
    lt_arr = np.zeros((n, d, d), dtype=complex)
    x_arr = np.zeros((n, d, d), dtype=complex)
    y_arr = np.zeros((n, d, d), dtype=complex)
    cdef double complex[:, :, ::1] m = m_arr
    cdef double complex[:, :, ::1] lt = lt_arr
    cdef double complex[:, :, ::1] x = x_arr
    cdef double complex[:, :, ::1] y = y_arr
    cdef double complex[:, ::1] tmp = np.zeros((d, d), dtype=complex)

    # m_j = eps_j gamma, lt_i = gamma eps_i^T
    for i in range(n):
        for a in range(d):
            for b in range(d):
                acc = 0
                for c in range(d):
                    acc = acc + eps[i, a, c] * gamma[c, b]
                m[i, a, b] = acc
                acc = 0
                for c in range(d):
                    acc = acc + gamma[a, c] * eps[i, b, c]
                lt[i, a, b] = acc

    for i in range(n):
        for j in range(n):
            if ordered:
                if j > i:
                    break
                wij = w[i] * w[j] * (0.5 if i == j else 1.0)
            else:
                wij = w[i] * w[j]
            if wij == 0:
                continue
            lag = i - j + n - 1
            for a in range(d):
                for b in range(d):
                    acc = 0
                    for c in range(d):
                        acc = acc + phi[lag, a, c] * m[j, c, b]
                    x[i, a, b] = x[i, a, b] + wij * acc
            if want_y:
                for a in range(d):
                    for b in range(d):
                        acc = 0
                        for c in range(d):
                            acc = acc + lt[i, a, c] * phi[lag, c, b]
                        y[j, a, b] = y[j, a, b] + wij * acc
    return x_arr, (y_arr if want_y else None)


def memory_contract(double complex[:, :, ::1] phi_hist, double complex[:, :, :, ::1] v_hist,
                    double[::1] q):
    cdef Py_ssize_t ns = phi_hist.shape[0], n = phi_hist.shape[1], d = v_hist.shape[2]
    cdef Py_ssize_t s, a, b, i, j
    cdef double complex coef
    out_arr = np.zeros((n, d, d), dtype=complex)
    cdef double complex[:, :, ::1] out = out_arr
    for s in range(ns):
        if q[s] == 0:
            continue
        for a in range(n):
            for b in range(n):
                coef = q[s] * phi_hist[s, a, b]
                if coef == 0:
                    continue
                for i in range(d):
                    for j in range(d):
                        out[a, i, j] = out[a, i, j] + coef * v_hist[s, b, i, j]
    return out_arr

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the coordinate-ascent s-vector solver.

Same contracts as `_kernels_py`; selected at import time in `_backend`.
"""
import numpy as np

from libc.math cimport sqrt


cdef inline void _update(double[:, ::1] lower, double[::1] x, Py_ssize_t start) noexcept:
    cdef Py_ssize_t p = lower.shape[0]
    cdef Py_ssize_t k, i
    cdef double lkk, xk, r, c, s, col
    for k in range(start, p):
        lkk = lower[k, k]
        xk = x[k]
        r = sqrt(lkk * lkk + xk * xk)
        c = r / lkk
        s = xk / lkk
        lower[k, k] = r
        for i in range(k + 1, p):
            col = (lower[i, k] + s * x[i]) / c
            lower[i, k] = col
            x[i] = c * x[i] - s * col


cdef inline Py_ssize_t _downdate(double[:, ::1] lower, double[::1] x, Py_ssize_t start) noexcept:
    """Returns -1 on success, else the index of the failing pivot."""
    cdef Py_ssize_t p = lower.shape[0]
    cdef Py_ssize_t k, i
    cdef double lkk, xk, r2, r, c, s, col
    for k in range(start, p):
        lkk = lower[k, k]
        xk = x[k]
        r2 = lkk * lkk - xk * xk
        if r2 <= 0.0:
            return k
        r = sqrt(r2)
        c = r / lkk
        s = xk / lkk
        lower[k, k] = r
        for i in range(k + 1, p):
            col = (lower[i, k] - s * x[i]) / c
            lower[i, k] = col
            x[i] = c * x[i] - s * col
    return -1


def chol_update(double[:, ::1] lower, double[::1] x, Py_ssize_t start=0):
    """In-place rank-one update: lower becomes the factor of L L^T + x x^T."""
    _update(lower, x, start)


def chol_downdate(double[:, ::1] lower, double[::1] x, Py_ssize_t start=0):
    """In-place rank-one downdate; raises FloatingPointError if not PD."""
    cdef Py_ssize_t bad = _downdate(lower, x, start)
    if bad >= 0:
        raise FloatingPointError(f"downdate leaves a non-positive pivot at index {bad}")


def sdp_sweep(double[:, ::1] lower, double[::1] s, double shift):
    """One cyclic pass of barrier-smoothed coordinate ascent over s in [0, 1].

    Same contract as the numpy twin: mutates `lower` and `s`, returns the
    largest coordinate change of the pass.
    """
    cdef Py_ssize_t p = s.shape[0]
    cdef Py_ssize_t j, i, k, bad
    cdef double old, new, cap, wsq, acc, delta
    cdef double max_delta = 0.0
    xbuf_arr = np.zeros(p)
    wbuf_arr = np.zeros(p)
    cdef double[::1] xbuf = xbuf_arr
    cdef double[::1] w = wbuf_arr
    for j in range(p):
        old = s[j]
        if old > 0.0:
            for i in range(j, p):
                xbuf[i] = 0.0
            xbuf[j] = sqrt(old)
            _update(lower, xbuf, j)
        # forward solve L w = e_j over the trailing block
        w[j] = 1.0 / lower[j, j]
        wsq = w[j] * w[j]
        for i in range(j + 1, p):
            acc = 0.0
            for k in range(j, i):
                acc += lower[i, k] * w[k]
            w[i] = -acc / lower[i, i]
            wsq += w[i] * w[i]
        cap = 1.0 / wsq
        new = cap - shift
        if new > 1.0:
            new = 1.0
        elif new < 0.0:
            new = 0.0
        s[j] = new
        if new > 0.0:
            for i in range(j, p):
                xbuf[i] = 0.0
            xbuf[j] = sqrt(new)
            bad = _downdate(lower, xbuf, j)
            if bad >= 0:
                raise FloatingPointError(
                    f"downdate leaves a non-positive pivot at index {bad}"
                )
        delta = new - old
        if delta < 0.0:
            delta = -delta
        if delta > max_delta:
            max_delta = delta
    return max_delta

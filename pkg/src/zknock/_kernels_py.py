"""Pure numpy kernels for the coordinate-ascent s-vector solver.

Mirror of the compiled module `_kernels_cy`; the active implementation is
chosen in `_backend`. Factors are lower-triangular with positive diagonal.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg


def chol_update(lower: np.ndarray, x: np.ndarray, start: int = 0) -> None:
    """In-place rank-one update: lower becomes the factor of L L^T + x x^T.

    `x` is destroyed. `start` marks the first nonzero entry of x, letting
    callers skip the leading no-op rotations.
    """
    p = lower.shape[0]
    for k in range(start, p):
        lkk = lower[k, k]
        xk = x[k]
        r = np.sqrt(lkk * lkk + xk * xk)
        c = r / lkk
        s = xk / lkk
        lower[k, k] = r
        if k + 1 < p:
            col = (lower[k + 1 :, k] + s * x[k + 1 :]) / c
            lower[k + 1 :, k] = col
            x[k + 1 :] = c * x[k + 1 :] - s * col


def chol_downdate(lower: np.ndarray, x: np.ndarray, start: int = 0) -> None:
    """In-place rank-one downdate: lower becomes the factor of L L^T - x x^T.

    Raises FloatingPointError if the downdated matrix is not positive
    definite. `x` is destroyed.
    """
    p = lower.shape[0]
    for k in range(start, p):
        lkk = lower[k, k]
        xk = x[k]
        r2 = lkk * lkk - xk * xk
        if r2 <= 0.0:
            raise FloatingPointError(f"downdate leaves a non-positive pivot at index {k}")
        r = np.sqrt(r2)
        c = r / lkk
        s = xk / lkk
        lower[k, k] = r
        if k + 1 < p:
            col = (lower[k + 1 :, k] - s * x[k + 1 :]) / c
            lower[k + 1 :, k] = col
            x[k + 1 :] = c * x[k + 1 :] - s * col


def sdp_sweep(lower: np.ndarray, s: np.ndarray, shift: float) -> float:
    """One cyclic pass of barrier-smoothed coordinate ascent over s in [0, 1].

    `lower` factors A = B0 - diag(s) for the constraint matrix B0 held by the
    caller; both `lower` and `s` are updated in place. The feasible maximum of
    coordinate j given the others is cap_j = 1 / (A + s_j e_j e_j^T)^{-1}_{jj};
    the coordinate-wise maximizer of sum(s) + shift * logdet(A) is exactly
    cap_j - shift, so a decreasing `shift` ladder tracks the central path while
    keeping A strictly positive definite. Returns the largest coordinate
    change of the pass.
    """
    p = s.shape[0]
    xbuf = np.zeros(p)
    rhs = np.zeros(p)
    max_delta = 0.0
    for j in range(p):
        old = s[j]
        if old > 0.0:
            xbuf[j:] = 0.0
            xbuf[j] = np.sqrt(old)
            chol_update(lower, xbuf, j)
        rhs[: p - j] = 0.0
        rhs[0] = 1.0
        w = scipy.linalg.solve_triangular(
            lower[j:, j:], rhs[: p - j], lower=True, check_finite=False
        )
        cap = 1.0 / float(w @ w)
        new = cap - shift
        if new > 1.0:
            new = 1.0
        elif new < 0.0:
            new = 0.0
        s[j] = new
        if new > 0.0:
            xbuf[j:] = 0.0
            xbuf[j] = np.sqrt(new)
            chol_downdate(lower, xbuf, j)
        delta = abs(new - old)
        if delta > max_delta:
            max_delta = delta
    return max_delta

"""Correlation matrices: validation, generators, factorization primitives, file IO.

Everything downstream (coupling construction, sampling, group statistics)
consumes the dense float64 representation defined here. Matrices are immutable
after construction; all functions are pure.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

SYMMETRY_TOL = 1e-12
ENTRY_TOL = 1e-12
PSD_TOL_PER_DIM = 1e-8  # lambda_min >= -PSD_TOL_PER_DIM * p accepted
RIDGE_EPSILON = 1e-6
RIDGE_PIVOT_TRIGGER = 1e-10


class ValidationError(ValueError):
    """Input fails a structural invariant (symmetry, PSD, domain bounds)."""


class FactorizationError(ValueError):
    """Matrix factorization failed beyond numerical tolerance."""


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric unit-diagonal PSD matrix of feature correlations.

    The array is validated and frozen read-only at construction, so instances
    are safe to share across threads.
    """

    values: np.ndarray
    lambda_min: float = 0.0  # smallest eigenvalue, filled in at validation

    def __post_init__(self):
        a = np.ascontiguousarray(self.values, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValidationError(f"expected a square matrix, got shape {a.shape}")
        p = a.shape[0]
        asym = np.max(np.abs(a - a.T)) if p > 1 else 0.0
        if asym > SYMMETRY_TOL:
            raise ValidationError(f"matrix not symmetric: max |a_ij - a_ji| = {asym:.3e}")
        if not np.all(a.diagonal() == 1.0):
            j = int(np.argmax(a.diagonal() != 1.0))
            raise ValidationError(f"diagonal entry {j} is {a[j, j]!r}, expected exactly 1.0")
        if np.max(np.abs(a)) > 1.0 + ENTRY_TOL:
            raise ValidationError("entries must lie in [-1, 1]")
        lo = float(np.linalg.eigvalsh(a)[0])
        if lo < -PSD_TOL_PER_DIM * p:
            raise ValidationError(f"matrix not PSD: smallest eigenvalue {lo:.3e}")
        a.flags.writeable = False
        object.__setattr__(self, "values", a)
        object.__setattr__(self, "lambda_min", lo)

    @property
    def p(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T equal to the factored matrix."""

    lower: np.ndarray
    source_dim: int


def make_compound_symmetry(p: int, rho: float) -> CorrelationMatrix:
    """Constant off-diagonal correlation rho; eigenvalues 1-rho and 1+(p-1)rho."""
    if p < 1:
        raise ValidationError("p must be >= 1")
    if not 0.0 <= rho < 1.0:
        raise ValidationError(f"rho must be in [0, 1), got {rho}")
    a = np.full((p, p), float(rho))
    np.fill_diagonal(a, 1.0)
    return CorrelationMatrix(a)


def make_ar1(p: int, rho: float) -> CorrelationMatrix:
    """First-order autoregressive structure: correlation rho^|i-j|."""
    if p < 1:
        raise ValidationError("p must be >= 1")
    if not abs(rho) < 1.0:
        raise ValidationError(f"|rho| must be < 1, got {rho}")
    idx = np.arange(p)
    a = float(rho) ** np.abs(idx[:, None] - idx[None, :]).astype(np.float64)
    np.fill_diagonal(a, 1.0)
    return CorrelationMatrix(a)


def _as_array(mat) -> np.ndarray:
    if isinstance(mat, CorrelationMatrix):
        return mat.values
    return np.ascontiguousarray(mat, dtype=np.float64)


def _cholesky_floored(a: np.ndarray) -> np.ndarray:
    """Left-looking Cholesky with pivot flooring for PSD-singular input.

    Zero (or round-off negative but within tolerance) pivots produce a zeroed
    column, so rank-deficient PSD matrices still factor exactly in
    distribution. A pivot below -PSD_TOL_PER_DIM * scale is indefinite.
    """
    p = a.shape[0]
    scale = max(float(np.max(np.abs(a.diagonal()))), np.finfo(np.float64).tiny)
    hard_floor = -PSD_TOL_PER_DIM * scale
    zero_floor = ENTRY_TOL * scale
    lower = np.zeros((p, p))
    for j in range(p):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot < hard_floor:
            raise FactorizationError(
                f"indefinite matrix: pivot {j} = {pivot:.3e} below tolerance {hard_floor:.3e}"
            )
        if pivot <= zero_floor:
            continue  # column stays zero (rank-revealing)
        ljj = np.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < p:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    return lower


def cholesky(mat) -> CholeskyFactor:
    """Lower Cholesky factor of a symmetric PSD matrix.

    Positive-definite inputs use LAPACK directly; PSD-but-singular inputs fall
    back to a pivot-floored factorization. Raises FactorizationError (naming
    the failing pivot) for indefinite input.
    """
    a = _as_array(mat)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    asym = np.max(np.abs(a - a.T)) if a.shape[0] > 1 else 0.0
    if asym > 1e-8 * max(1.0, np.max(np.abs(a))):
        raise ValidationError(f"matrix not symmetric: max |a_ij - a_ji| = {asym:.3e}")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        lower = _cholesky_floored(a)
    return CholeskyFactor(lower=lower, source_dim=a.shape[0])


def inverse_spd(mat, *, ridge_epsilon: float | None = RIDGE_EPSILON, diagnostics: dict | None = None) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky.

    Near-singular input (smallest Cholesky pivot below RIDGE_PIVOT_TRIGGER) is
    regularized as mat + ridge_epsilon * I; the fallback is recorded in
    `diagnostics` when a dict is supplied. Pass ridge_epsilon=None to disable,
    in which case near-singular input raises.
    """
    a = _as_array(mat)
    if diagnostics is not None:
        diagnostics.setdefault("ridge_applied", False)

    def _try(matrix):
        lower = np.linalg.cholesky(matrix)
        if float(np.min(lower.diagonal()) ** 2) < RIDGE_PIVOT_TRIGGER:
            raise np.linalg.LinAlgError("pivot below near-singularity trigger")
        return scipy.linalg.cho_solve((lower, True), np.eye(a.shape[0]))

    try:
        return _try(a)
    except np.linalg.LinAlgError:
        if not ridge_epsilon:
            raise FactorizationError(
                "matrix is singular within tolerance; consider ridge regularization "
                "(inverse_spd with ridge_epsilon > 0)"
            ) from None
    try:
        inv = _try(a + ridge_epsilon * np.eye(a.shape[0]))
    except np.linalg.LinAlgError:
        raise FactorizationError(
            f"matrix is singular even after ridge regularization (epsilon={ridge_epsilon})"
        ) from None
    if diagnostics is not None:
        diagnostics["ridge_applied"] = True
        diagnostics["ridge_epsilon"] = ridge_epsilon
    return inv


def save_correlation(path, sigma: CorrelationMatrix) -> None:
    """Write as headerless CSV (.csv) or little-endian binary (.bin)."""
    path = str(path)
    if path.endswith(".csv"):
        np.savetxt(path, sigma.values, delimiter=",", fmt="%.17g")
    elif path.endswith(".bin"):
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", sigma.p))
            fh.write(np.ascontiguousarray(sigma.values, dtype="<f8").tobytes())
    else:
        raise ValidationError(f"unsupported correlation file extension: {path}")


def load_correlation(path) -> CorrelationMatrix:
    """Read a correlation matrix written by save_correlation; validates on load."""
    path = str(path)
    if path.endswith(".csv"):
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    elif path.endswith(".bin"):
        with open(path, "rb") as fh:
            header = fh.read(8)
            if len(header) != 8:
                raise ValidationError(f"truncated binary correlation file: {path}")
            (p,) = struct.unpack("<Q", header)
            data = np.frombuffer(fh.read(), dtype="<f8")
        if data.size != p * p:
            raise ValidationError(
                f"binary correlation file {path} has {data.size} values, expected {p * p}"
            )
        a = data.reshape(p, p).astype(np.float64)
    else:
        raise ValidationError(f"unsupported correlation file extension: {path}")
    return CorrelationMatrix(a)

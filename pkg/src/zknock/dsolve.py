"""Construction of the decoupling matrix D for multi-knockoff generation.

D = diag(s) must satisfy ((M+1)/M) * Sigma - D >= 0 (PSD). Larger s means
knockoffs less correlated with the originals, hence more power. Three
constructions are provided: the uniform equi-correlated choice, a coordinate
ascent maximizing sum(s) under the PSD constraint, and a scaled block-diagonal
variant for grouped features. A perturbation factor can shrink any feasible D.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from ._backend import kernels
from .corr import CorrelationMatrix, FactorizationError, ValidationError
from .groups import GroupStructure

FEASIBILITY_TOL = 1e-8
SDP_DEFAULT_TOL = 1e-5
SDP_DEFAULT_MAX_ITERS = 100
_BOUNDARY_SLACK = 1e-9  # relative pullback used by the feasibility projection
_BARRIER_START = 0.1
_BARRIER_SHRINK = 0.1
# The ascent runs against the constraint shifted by this floor, so the
# maintained factor's condition number stays ~1e7 and rank-one updates do not
# amplify round-off; costs at most this much slack in the final s.
_MARGIN_FLOOR = 1e-7


@dataclass(frozen=True, eq=False)
class SVector:
    """Diagonal of D plus the solve metadata needed to reuse or audit it."""

    s: np.ndarray
    M: int
    gamma: float = 1.0
    feasibility_margin: float = 0.0
    converged: bool = True

    def __post_init__(self):
        s = np.ascontiguousarray(self.s, dtype=np.float64)
        if s.ndim != 1:
            raise ValidationError(f"s must be a vector, got shape {s.shape}")
        if np.any(s < 0):
            raise ValidationError("s entries must be nonnegative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.M < 1:
            raise ValidationError(f"M must be >= 1, got {self.M}")
        s.flags.writeable = False
        object.__setattr__(self, "s", s)

    @property
    def p(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True, eq=False)
class BlockDiagonalD:
    """Group-block decoupling matrix: scale * blockdiag(Sigma_g)."""

    matrix: np.ndarray
    groups: GroupStructure
    M: int
    scale: float
    feasibility_margin: float = 0.0

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def _constraint_scale(M: int) -> float:
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    return (M + 1) / M


def constraint_margin(sigma: CorrelationMatrix, d, M: int) -> float:
    """Smallest eigenvalue of ((M+1)/M) * Sigma - D; >= 0 means feasible."""
    a = _constraint_scale(M) * sigma.values
    d = np.asarray(d, dtype=np.float64)
    if d.ndim == 1:
        a = a - np.diag(d)
    else:
        a = a - d
    return float(np.linalg.eigvalsh(a)[0])


def _project_feasible(sigma: CorrelationMatrix, d: np.ndarray, M: int):
    """Scale D down by the largest factor <= 1 restoring the PSD constraint.

    Scaling toward zero is monotone for the constraint, so the exact factor is
    1 / lambda_max(L^-1 D L^-T) with L the factor of ((M+1)/M) * Sigma.
    """
    margin = constraint_margin(sigma, d, M)
    if margin >= -FEASIBILITY_TOL:
        return d, margin, 1.0
    a0 = _constraint_scale(M) * sigma.values
    lower = np.linalg.cholesky(a0)
    dmat = np.diag(d) if d.ndim == 1 else d
    half = scipy.linalg.solve_triangular(lower, dmat, lower=True, check_finite=False)
    whitened = scipy.linalg.solve_triangular(lower, half.T, lower=True, check_finite=False)
    lam_max = float(np.linalg.eigvalsh((whitened + whitened.T) / 2.0)[-1])
    factor = min(1.0, (1.0 - _BOUNDARY_SLACK) / lam_max)
    d = d * factor
    return d, constraint_margin(sigma, d, M), factor


def solve_equi(sigma: CorrelationMatrix, M: int) -> SVector:
    """Uniform s_j = min(1, ((M+1)/M) * lambda_min(Sigma)) for all j."""
    scale = _constraint_scale(M)
    lam = sigma.lambda_min
    if lam < -FEASIBILITY_TOL * sigma.p:
        raise ValidationError(f"invalid correlation matrix: lambda_min = {lam:.3e}")
    value = min(1.0, max(0.0, scale * lam))
    s = np.full(sigma.p, value)
    return SVector(s=s, M=M, feasibility_margin=constraint_margin(sigma, s, M))




def solve_sdp(
    sigma: CorrelationMatrix,
    M: int,
    tol: float = SDP_DEFAULT_TOL,
    max_iters: int = SDP_DEFAULT_MAX_ITERS,
) -> SVector:
    """Maximize sum(s) subject to s_j in [0, 1] and ((M+1)/M) * Sigma - D >= 0.

    Cyclic coordinate ascent with a logarithmic barrier: for each coordinate
    the exact maximizer of sum(s) + mu * logdet of the constraint matrix is
    its feasible cap minus mu, so sweeping with a decreasing mu ladder tracks
    the central path toward the optimum while the maintained Cholesky factor
    stays well-conditioned (a plain greedy pass would drive the factor
    singular and starve later coordinates). The factor is rebuilt from scratch
    every pass, which bounds round-off drift. At the final barrier level
    (half of `tol`) no single coordinate can increase by more than ~tol while
    keeping feasibility. Non-convergence returns the last feasible iterate
    with converged=False.

    The equi solution is a floor: whichever of the two carries more total
    mass is returned, so the result never falls below the uniform
    construction.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    scale = _constraint_scale(M)
    if sigma.lambda_min <= 0:
        raise ValidationError(
            f"coordinate ascent requires positive definite Sigma (lambda_min = {sigma.lambda_min:.3e})"
        )
    p = sigma.p
    a0 = scale * sigma.values
    a_work = a0 - _MARGIN_FLOOR * np.eye(p)
    s = np.zeros(p)

    mu_final = tol / 2.0
    mu = _BARRIER_START
    stage_sweeps = 0
    converged = False
    sweeps = 0
    failures = 0
    d_prev = None
    while sweeps < max_iters:
        s_before = s.copy()
        lower = _chol_with_jitter(a_work - np.diag(s))
        try:
            delta = kernels.sdp_sweep(lower, s, mu)
        except FloatingPointError:
            failures += 1
            if failures > max_iters:
                break
            continue  # factor drifted across the PSD boundary; refactor and retry
        sweeps += 1
        stage_sweeps += 1
        at_final = mu <= mu_final
        if delta < tol and at_final:
            converged = True
            break
        if not at_final and (delta < mu * _BARRIER_SHRINK or stage_sweeps >= 2):
            mu = max(mu * _BARRIER_SHRINK, mu_final)
            stage_sweeps = 0
            d_prev = None
            continue
        # Successive sweep increments become nearly collinear (geometric
        # zig-zag along a face); safeguarded Aitken extrapolation jumps
        # ahead when the candidate keeps a margin proportional to the
        # barrier level (a boundary landing would wreck the next factor).
        d_new = s - s_before
        if d_prev is not None:
            norm_new = float(np.linalg.norm(d_new))
            norm_prev = float(np.linalg.norm(d_prev))
            if norm_new > 0.0 and norm_prev > 0.0:
                align = float(d_new @ d_prev) / (norm_new * norm_prev)
                ratio = norm_new / norm_prev
                if align > 0.9 and 0.3 < ratio < 0.9999:
                    boost = min(ratio / (1.0 - ratio), 1e4)
                    guard = (mu * 0.01) * np.eye(p)
                    for _ in range(3):
                        cand = np.clip(s + boost * d_new, 0.0, 1.0)
                        try:
                            np.linalg.cholesky(a_work - np.diag(cand) - guard)
                        except np.linalg.LinAlgError:
                            boost *= 0.5
                            continue
                        s = cand
                        d_prev = None
                        break
                    if d_prev is None:
                        continue
        d_prev = d_new
    if not converged:
        warnings.warn(
            f"coordinate ascent did not converge in {max_iters} sweeps; "
            "returning the best feasible iterate",
            RuntimeWarning,
            stacklevel=2,
        )

    s, margin, _ = _project_feasible(sigma, s, M)
    equi = solve_equi(sigma, M)
    if float(np.sum(equi.s)) > float(np.sum(s)):
        return SVector(
            s=equi.s, M=M, feasibility_margin=equi.feasibility_margin, converged=converged
        )
    return SVector(s=s, M=M, feasibility_margin=margin, converged=converged)


def apply_perturbation(s: SVector, gamma: float, sigma: CorrelationMatrix | None = None) -> SVector:
    """Shrink s by gamma in (0, 1]; shrinking D preserves the PSD constraint.

    The stored margin is exact when `sigma` is supplied, otherwise the
    pre-perturbation margin is kept (a valid lower bound).
    """
    if not 0.0 < gamma <= 1.0:
        raise ValidationError(f"gamma must be in (0, 1], got {gamma}")
    new_s = s.s * gamma
    margin = s.feasibility_margin if sigma is None else constraint_margin(sigma, new_s, s.M)
    return SVector(
        s=new_s,
        M=s.M,
        gamma=s.gamma * gamma,
        feasibility_margin=margin,
        converged=s.converged,
    )


def solve_group_equi(sigma: CorrelationMatrix, groups: GroupStructure, M: int) -> BlockDiagonalD:
    """Scaled block-diagonal D aligned with a group structure.

    D = g * blockdiag(Sigma_g) with g the largest factor in (0, 1] keeping
    ((M+1)/M) * Sigma - D PSD, i.e. min(1, ((M+1)/M) * lambda_min of Sigma
    whitened by the block diagonal).
    """
    scale = _constraint_scale(M)
    p = sigma.p
    if groups.assignment.shape[0] != p:
        raise ValidationError(
            f"group assignment covers {groups.assignment.shape[0]} features, Sigma has {p}"
        )
    block = np.zeros((p, p))
    for members in groups.members:
        ix = np.ix_(members, members)
        block[ix] = sigma.values[ix]
    try:
        lam = float(
            scipy.linalg.eigh(
                sigma.values, block, eigvals_only=True, subset_by_index=[0, 0]
            )[0]
        )
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise FactorizationError(f"group blocks are not positive definite: {exc}") from None
    gamma_star = min(1.0, scale * lam)
    d = gamma_star * block
    d, margin, factor = _project_feasible(sigma, d, M)
    return BlockDiagonalD(
        matrix=d, groups=groups, M=M, scale=gamma_star * factor, feasibility_margin=margin
    )


def save_svector(path, s: SVector) -> None:
    """CSV of s values (one per line) plus a JSON sidecar with the metadata."""
    path = Path(path)
    np.savetxt(path, s.s, fmt="%.17g")
    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "M": s.M,
                "gamma": s.gamma,
                "feasibility_margin": s.feasibility_margin,
                "converged": s.converged,
            },
            indent=2,
        )
        + "\n"
    )


def load_svector(path) -> SVector:
    path = Path(path)
    values = np.loadtxt(path, ndmin=1)
    meta = json.loads(path.with_suffix(".json").read_text())
    return SVector(
        s=values,
        M=int(meta["M"]),
        gamma=float(meta["gamma"]),
        feasibility_margin=float(meta["feasibility_margin"]),
        converged=bool(meta["converged"]),
    )

"""Knockoff statistics: which copy wins (kappa) and by how much (tau).

For each feature, kappa is the index of the largest squared score among the
original (index 0) and its M knockoff copies; tau is that winning squared
score minus the median of the remaining M squared scores. Group-level variants
aggregate evidence with a chi-square quadratic form per group first.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .corr import CorrelationMatrix, FactorizationError, ValidationError
from .groups import GroupStructure
from .sampler import KnockoffScores

GROUP_RIDGE_EPSILON = 1e-6


@dataclass(frozen=True, eq=False)
class KnockoffStats:
    """Per-feature (or per-group) selection statistics."""

    kappa: np.ndarray
    tau: np.ndarray
    M: int

    def __post_init__(self):
        kappa = np.ascontiguousarray(self.kappa, dtype=np.int64)
        tau = np.ascontiguousarray(self.tau, dtype=np.float64)
        if kappa.shape != tau.shape or kappa.ndim != 1:
            raise ValidationError("kappa and tau must be equal-length vectors")
        if kappa.size and (kappa.min() < 0 or kappa.max() > self.M):
            raise ValidationError(f"kappa entries must lie in 0..{self.M}")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "tau", tau)

    @property
    def q(self) -> int:
        return self.kappa.shape[0]


def _kappa_tau(values: np.ndarray, M: int) -> KnockoffStats:
    """Argmax / median-of-the-rest rule on a q x (M+1) score array.

    Ties in the argmax break toward the smallest copy index (measure-zero for
    continuous scores; pinned for determinism).
    """
    q = values.shape[0]
    kappa = np.argmax(values, axis=1)
    keep = np.ones_like(values, dtype=bool)
    keep[np.arange(q), kappa] = False
    others = values[keep].reshape(q, M)
    tau = values[np.arange(q), kappa] - np.median(others, axis=1)
    return KnockoffStats(kappa=kappa, tau=tau, M=M)


def knockoff_stats(scores: KnockoffScores | np.ndarray) -> KnockoffStats:
    """Feature-level statistics from original-plus-knockoff Z-scores."""
    z = scores.z if isinstance(scores, KnockoffScores) else np.asarray(scores, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValidationError(f"scores must be q x (M+1), got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValidationError("scores must be finite")
    return _kappa_tau(z**2, z.shape[1] - 1)


def _group_factor(sigma: CorrelationMatrix, members, gid: int) -> np.ndarray:
    block = sigma.values[np.ix_(members, members)]
    try:
        return np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(block + GROUP_RIDGE_EPSILON * np.eye(len(members)))
    except np.linalg.LinAlgError:
        raise FactorizationError(
            f"correlation block of group {gid} is singular even after ridge"
        ) from None


def group_chi_square(z, sigma: CorrelationMatrix, groups: GroupStructure) -> np.ndarray:
    """Quadratic-form statistic z_g' Sigma_g^-1 z_g for each group g."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.shape != (sigma.p,):
        raise ValidationError(f"z has shape {z.shape}, expected ({sigma.p},)")
    return group_chi_square_scores(z[:, None], sigma, groups)[:, 0]


def group_chi_square_scores(
    z_columns: np.ndarray, sigma: CorrelationMatrix, groups: GroupStructure
) -> np.ndarray:
    """Chi-square statistics for each group and each column of a p x k array.

    Used on the p x (M+1) knockoff score matrix to get group-level scores for
    the original and every copy in one pass.
    """
    z_columns = np.ascontiguousarray(z_columns, dtype=np.float64)
    out = np.empty((groups.G, z_columns.shape[1]))
    for gid, members in enumerate(groups.members):
        lower = _group_factor(sigma, list(members), gid)
        w = scipy.linalg.solve_triangular(
            lower, z_columns[list(members), :], lower=True, check_finite=False
        )
        out[gid] = np.sum(w * w, axis=0)
    return out


def group_knockoff_stats(chi: np.ndarray, power: int = 2) -> KnockoffStats:
    """Apply the argmax / median rule to chi**power (power 2 matches the
    group pipeline as published; power 1 skips the extra squaring)."""
    chi = np.ascontiguousarray(chi, dtype=np.float64)
    if chi.ndim != 2 or chi.shape[1] < 2:
        raise ValidationError(f"chi must be G x (M+1), got shape {chi.shape}")
    if np.any(chi < 0):
        raise ValidationError("chi statistics must be nonnegative")
    if power not in (1, 2):
        raise ValidationError(f"power must be 1 or 2, got {power}")
    return _kappa_tau(chi**power, chi.shape[1] - 1)


def save_stats(path, stats: KnockoffStats) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "kappa", "tau"])
        for j in range(stats.q):
            writer.writerow([j, int(stats.kappa[j]), f"{stats.tau[j]:.17g}"])


def load_stats(path, M: int) -> KnockoffStats:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    kappa = np.array([int(r["kappa"]) for r in rows], dtype=np.int64)
    tau = np.array([float(r["tau"]) for r in rows])
    return KnockoffStats(kappa=kappa, tau=tau, M=M)

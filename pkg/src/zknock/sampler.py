"""Knockoff copies of Z-scores: the efficient sampler and its brute-force twin.

Given Sigma, D and the copy count M, knockoff copies satisfy
Ztilde^(1:M) = P z + E with E ~ N(0, V), where P stacks M copies of
I - D Sigma^-1 and V has diagonal blocks C = 2D - D Sigma^-1 D and
off-diagonal blocks C - D.

The efficient path exploits V = V1 + V2: V1 is block-constant with the PSD
block C - ((M-1)/M) D (one p x p Cholesky, shared by all copies), and V2 is
the centered-diagonal remainder sampled by mean-centering M independent
N(0, D) draws. Per draw this costs O(p^2 + pM) after the one-time build. The
trivial path factors the full pM x pM matrix V and is kept as a correctness
oracle and timing baseline.

D may be a nonnegative vector (diagonal D) or a PSD matrix (group blocks).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .corr import CorrelationMatrix, FactorizationError, ValidationError, cholesky, inverse_spd
from .dsolve import BlockDiagonalD, SVector

TRIVIAL_DIM_GUARD = 20000  # refuse pM above this: the dense V would not fit


@dataclass(frozen=True)
class RandomSeed:
    """Reproducible randomness key; distinct stream_ids give independent streams."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValidationError(f"{name} must be an unsigned 64-bit integer, got {v}")


def make_rng(seed, *path: int) -> np.random.Generator:
    """Generator for a seed; extra path integers derive independent substreams."""
    if isinstance(seed, np.random.Generator):
        if path:
            raise ValidationError("cannot derive a substream from a live generator")
        return seed
    if isinstance(seed, int):
        seed = RandomSeed(seed)
    if not isinstance(seed, RandomSeed):
        raise ValidationError(f"expected RandomSeed, int or Generator, got {type(seed)!r}")
    ss = np.random.SeedSequence(entropy=seed.master_seed, spawn_key=(seed.stream_id, *path))
    return np.random.default_rng(ss)


def _as_d(d) -> np.ndarray:
    """Normalize the decoupling input to a 1-d (diagonal) or 2-d array."""
    if isinstance(d, SVector):
        return d.s
    if isinstance(d, BlockDiagonalD):
        return d.matrix
    a = np.ascontiguousarray(d, dtype=np.float64)
    if a.ndim not in (1, 2):
        raise ValidationError(f"D must be a vector or square matrix, got shape {a.shape}")
    if a.ndim == 2 and a.shape[0] != a.shape[1]:
        raise ValidationError(f"D must be square, got shape {a.shape}")
    return a


def _coupling_parts(sigma: CorrelationMatrix, d: np.ndarray):
    """proj = I - D Sigma^-1 and C = 2D - D Sigma^-1 D (symmetrized)."""
    p = sigma.p
    sigma_inv = inverse_spd(sigma)
    if d.ndim == 1:
        if d.shape[0] != p:
            raise ValidationError(f"D has length {d.shape[0]}, Sigma has dimension {p}")
        dsig = d[:, None] * sigma_inv
        c = 2.0 * np.diag(d) - dsig * d[None, :]
    else:
        if d.shape[0] != p:
            raise ValidationError(f"D has dimension {d.shape[0]}, Sigma has dimension {p}")
        dsig = d @ sigma_inv
        c = 2.0 * d - dsig @ d
    c = (c + c.T) / 2.0
    proj = np.eye(p) - dsig
    return proj, c


@dataclass(frozen=True, eq=False)
class KnockoffModel:
    """Precomputed coupling, reusable across unlimited draws.

    `lower` factors the shared noise block C - ((M-1)/M) D; `d_factor` factors
    D itself (diag(sqrt(s)) in the diagonal case).
    """

    p: int
    M: int
    d: np.ndarray
    proj_block: np.ndarray
    lower: np.ndarray
    d_factor: np.ndarray

    @property
    def diagonal(self) -> bool:
        return self.d.ndim == 1

    @property
    def s(self) -> np.ndarray:
        return self.d if self.diagonal else self.d.diagonal()

    @property
    def d_sqrt(self) -> np.ndarray:
        return np.sqrt(self.d) if self.diagonal else self.d_factor.diagonal()


def build_model(sigma: CorrelationMatrix, s, M: int) -> KnockoffModel:
    """Assemble the reusable sampling model for (Sigma, D, M).

    Raises FactorizationError naming the offending eigenvalue when D is
    infeasible, i.e. C - ((M-1)/M) D is indefinite.
    """
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    d = _as_d(s)
    proj, c = _coupling_parts(sigma, d)
    dmat = np.diag(d) if d.ndim == 1 else d
    shared = c - ((M - 1) / M) * dmat
    shared = (shared + shared.T) / 2.0
    try:
        lower = cholesky(shared).lower
    except FactorizationError:
        lam = float(np.linalg.eigvalsh(shared)[0])
        raise FactorizationError(
            f"infeasible D for M={M}: C - ((M-1)/M) D has smallest eigenvalue {lam:.3e}"
        ) from None
    if d.ndim == 1:
        if np.any(d < 0):
            raise ValidationError("s entries must be nonnegative")
        d_factor = np.diag(np.sqrt(d))
    else:
        d_factor = cholesky(dmat).lower
    return KnockoffModel(
        p=sigma.p, M=M, d=d, proj_block=proj, lower=lower, d_factor=d_factor
    )


@dataclass(frozen=True, eq=False)
class KnockoffScores:
    """p x (M+1) array of scores; column 0 is the original Z vector."""

    z: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.z, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] < 2:
            raise ValidationError(f"scores must be p x (M+1) with M >= 1, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("scores must be finite")
        object.__setattr__(self, "z", a)

    @property
    def p(self) -> int:
        return self.z.shape[0]

    @property
    def M(self) -> int:
        return self.z.shape[1] - 1


def sample_noise_fast(model: KnockoffModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws of the knockoff noise E, shaped (n, M, p), by the efficient path."""
    p, m = model.p, model.M
    e1 = rng.standard_normal((n, p)) @ model.lower.T
    g2 = rng.standard_normal((n, m, p))
    if model.diagonal:
        e2 = g2 * np.sqrt(model.d)
    else:
        e2 = g2 @ model.d_factor.T
    e2 -= e2.mean(axis=1, keepdims=True)
    e2 += e1[:, None, :]
    return e2


def sample_knockoffs_fast(model: KnockoffModel, z, seed) -> KnockoffScores:
    """One set of M knockoff copies of z via the efficient path."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.shape != (model.p,):
        raise ValidationError(f"z has shape {z.shape}, expected ({model.p},)")
    rng = make_rng(seed)
    noise = sample_noise_fast(model, 1, rng)[0]
    copies = model.proj_block @ z + noise
    return KnockoffScores(np.column_stack([z, copies.T]))


def assemble_v(sigma: CorrelationMatrix, s, M: int) -> np.ndarray:
    """The full pM x pM noise covariance: diagonal blocks C, off-diagonal C - D."""
    d = _as_d(s)
    _, c = _coupling_parts(sigma, d)
    dmat = np.diag(d) if d.ndim == 1 else d
    ones = np.ones((M, M))
    return np.kron(ones, c - dmat) + np.kron(np.eye(M), dmat)


def assemble_v1_v2(sigma: CorrelationMatrix, s, M: int):
    """The rank-structured split V = V1 + V2 behind the efficient sampler."""
    d = _as_d(s)
    _, c = _coupling_parts(sigma, d)
    dmat = np.diag(d) if d.ndim == 1 else d
    ones = np.ones((M, M))
    v1 = np.kron(ones, c - ((M - 1) / M) * dmat)
    v2 = np.kron(np.eye(M) - ones / M, dmat)
    return v1, v2


def _trivial_factor(sigma: CorrelationMatrix, s, M: int):
    d = _as_d(s)
    if sigma.p * M > TRIVIAL_DIM_GUARD:
        raise ValidationError(
            f"trivial path refused: p*M = {sigma.p * M} exceeds the memory guard "
            f"({TRIVIAL_DIM_GUARD}); use the fast path"
        )
    proj, _ = _coupling_parts(sigma, d)
    v = assemble_v(sigma, d, M)
    return proj, cholesky(v).lower


def sample_noise_trivial(
    sigma: CorrelationMatrix, s, M: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n draws of E shaped (n, M, p) by factoring the full V; oracle path."""
    _, lower = _trivial_factor(sigma, s, M)
    g = rng.standard_normal((n, sigma.p * M))
    return (g @ lower.T).reshape(n, M, sigma.p)


def sample_knockoffs_trivial(sigma: CorrelationMatrix, s, M: int, z, seed) -> KnockoffScores:
    """Same distributional contract as the fast path, via the pM x pM Cholesky."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.shape != (sigma.p,):
        raise ValidationError(f"z has shape {z.shape}, expected ({sigma.p},)")
    proj, lower = _trivial_factor(sigma, s, M)
    rng = make_rng(seed)
    noise = (lower @ rng.standard_normal(sigma.p * M)).reshape(M, sigma.p)
    copies = proj @ z + noise
    return KnockoffScores(np.column_stack([z, copies.T]))


def save_scores(path, scores: KnockoffScores) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"z{m}" for m in range(scores.M + 1)])
        for row in scores.z:
            writer.writerow([f"{v:.17g}" for v in row])


def load_scores(path) -> KnockoffScores:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "z0":
            raise ValidationError(f"malformed scores file: {path}")
        rows = [[float(v) for v in row] for row in reader]
    return KnockoffScores(np.asarray(rows))

"""FWER filter for multi-knockoff statistics, plus the M=1 baselines.

The filter walks features in decreasing tau order, rejecting those whose
original score beats every knockoff copy (kappa = 0), and stops at the v-th
feature where a knockoff wins. Under the null the zero-kappa indicators are
independent Bernoulli(1/(M+1)), so the number of false rejections at the stop
is negative binomial; v is the largest stopping count whose tail stays within
the target level alpha.

Tail probabilities are evaluated in exact rational arithmetic: the anchor
cases sit exactly on the boundary (e.g. alpha = 0.05 with M = 19 gives tail
exactly 1/20) and float rounding would flip them.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, log

import numpy as np

from .corr import ValidationError
from .stats import KnockoffStats

M_CAP_DEFAULT = 10_000


def _nb_tail(v: int, M: int, k: int) -> Fraction:
    """Pr(U >= k) for U ~ NB(v, 1/(M+1)): zero-kappa events (probability
    1/(M+1) each) before the v-th nonzero-kappa event. Exact rational."""
    if v == 0:
        return Fraction(0)
    fail = Fraction(1, M + 1)
    succ = 1 - fail
    acc = Fraction(0)
    term = succ**v  # pmf at u = 0
    for u in range(k):
        acc += term
        term = term * fail * (v + u) / (u + 1)
    return 1 - acc


def nb_threshold(alpha: float, M: int, k: int = 1) -> int:
    """Largest v with Pr(U >= k | U ~ NB(v, 1/(M+1))) <= alpha.

    v = 0 is a valid result and means no rejections are possible.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    if M < 1 or k < 1:
        raise ValidationError("M and k must be >= 1")
    alpha_exact = Fraction(alpha)
    if k == 1:
        # closed form floor(log(1-alpha) / log(M/(M+1))), then exact refinement
        v = max(0, int(log(1.0 - alpha) / log(M / (M + 1))) - 2)
    else:
        v = 0
    while _nb_tail(v + 1, M, k) <= alpha_exact:
        v += 1
    while v > 0 and _nb_tail(v, M, k) > alpha_exact:
        v -= 1
    return v


def choose_M(alpha: float, cap: int = M_CAP_DEFAULT) -> int:
    """Smallest number of knockoff copies giving a nonzero stopping count,
    i.e. smallest M with 1/(M+1) <= alpha.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    M = ceil(1 / Fraction(alpha)) - 1
    if M > cap:
        raise ValidationError(
            f"alpha={alpha} needs M={M} knockoff copies, above the cap {cap}"
        )
    return max(1, M)


@dataclass(frozen=True)
class FilterConfig:
    """Target level plus the derived stopping count v.

    v is computed from (alpha, M, k) unless supplied; a supplied v above the
    level-compliant maximum is kept but triggers a warning.
    """

    alpha: float
    M: int
    k: int = 1
    v: int = field(default=-1)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.M < 1 or self.k < 1:
            raise ValidationError("M and k must be >= 1")
        compliant = nb_threshold(self.alpha, self.M, self.k)
        if self.v < 0:
            object.__setattr__(self, "v", compliant)
        elif self.v > compliant:
            warnings.warn(
                f"v={self.v} exceeds the level-compliant maximum {compliant} "
                f"for alpha={self.alpha}, M={self.M}, k={self.k}",
                UserWarning,
                stacklevel=2,
            )


@dataclass(frozen=True, eq=False)
class FilterOutcome:
    """Rejections plus the walk diagnostics: stop position T (1-based count of
    examined features) and the examined (index, kappa, tau) trace."""

    rejected: tuple
    T: int
    v: int
    M: int
    alpha: float
    k: int = 1
    trace: tuple = ()

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "M": self.M,
            "k": self.k,
            "v": self.v,
            "T": self.T,
            "rejected": list(self.rejected),
            "trace": [
                {"index": int(i), "kappa": int(kp), "tau": float(t)}
                for i, kp, t in self.trace
            ],
        }


def fwer_filter(stats: KnockoffStats, config: FilterConfig) -> FilterOutcome:
    """Walk features in decreasing tau order (ties: ascending index), reject
    kappa = 0 entries, stop at the v-th nonzero kappa or when exhausted."""
    q = stats.q
    base = dict(v=config.v, M=config.M, alpha=config.alpha, k=config.k)
    if q == 0 or config.v == 0:
        return FilterOutcome(rejected=(), T=0, trace=(), **base)
    order = np.lexsort((np.arange(q), -stats.tau))
    rejected = []
    trace = []
    nonzero_seen = 0
    T = 0
    for pos in order:
        T += 1
        kp = int(stats.kappa[pos])
        trace.append((int(pos), kp, float(stats.tau[pos])))
        if kp == 0:
            rejected.append(int(pos))
        else:
            nonzero_seen += 1
            if nonzero_seen == config.v:
                break
    return FilterOutcome(rejected=tuple(sorted(rejected)), T=T, trace=tuple(trace), **base)


def _nb_tail_half(v: int, k: int) -> Fraction:
    return _nb_tail(v, 1, k)


def janson_rule(alpha: float, k: int = 1, seed=None, *, stochastic: bool = True):
    """Stopping count for the single-knockoff (M = 1) baseline.

    Deterministic rule: largest v with Pr(U >= k | NB(v, 1/2)) <= alpha.
    Stochastic rule: interpolates between that v and v+1 so the tail averages
    exactly to alpha; for k = 1 and alpha < 1/2 this is v = 1 with probability
    2 * alpha, else 0. Returns (v, used_randomization).
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    v_det = nb_threshold(alpha, 1, k)
    if not stochastic:
        return v_det, False
    alpha_exact = Fraction(alpha)
    lo = _nb_tail_half(v_det, k)
    hi = _nb_tail_half(v_det + 1, k)
    prob_up = float((alpha_exact - lo) / (hi - lo))
    if prob_up <= 0.0:
        return v_det, True
    from .sampler import make_rng

    if seed is None:
        raise ValidationError("the stochastic rule needs a seed or generator")
    rng = make_rng(seed)
    v = v_det + 1 if rng.random() < prob_up else v_det
    return v, True


def derandomized_select(rejection_sets, eta: float, q: int):
    """Features appearing in at least a fraction eta of the rejection sets."""
    if not rejection_sets:
        raise ValidationError("need at least one rejection set")
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"eta must be in (0, 1], got {eta}")
    counts = np.zeros(q, dtype=np.int64)
    for rset in rejection_sets:
        idx = np.asarray(list(rset), dtype=np.int64)
        if idx.size:
            if idx.min() < 0 or idx.max() >= q:
                raise ValidationError("rejection set index out of range")
            counts[idx] += 1
    frequency = counts / len(rejection_sets)
    return [int(j) for j in np.flatnonzero(frequency >= eta)]

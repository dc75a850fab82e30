"""Summary-statistics knockoff inference with family-wise error rate control.

Builds knockoff copies of association Z-scores directly from a feature
correlation matrix, then selects features through a filter whose false
discoveries follow a negative binomial law at the stopping time.
"""
from ._backend import BACKEND, available_backends
from .corr import (
    CholeskyFactor,
    CorrelationMatrix,
    FactorizationError,
    ValidationError,
    cholesky,
    inverse_spd,
    load_correlation,
    make_ar1,
    make_compound_symmetry,
    save_correlation,
)
from .dsolve import (
    BlockDiagonalD,
    SVector,
    apply_perturbation,
    constraint_margin,
    solve_equi,
    solve_group_equi,
    solve_sdp,
)
from .filter import (
    FilterConfig,
    FilterOutcome,
    choose_M,
    derandomized_select,
    fwer_filter,
    janson_rule,
    nb_threshold,
)
from .groups import ClusterConfig, GroupStructure, cluster, singleton_groups
from .sampler import (
    KnockoffModel,
    KnockoffScores,
    RandomSeed,
    assemble_v,
    assemble_v1_v2,
    build_model,
    make_rng,
    sample_knockoffs_fast,
    sample_knockoffs_trivial,
    sample_noise_fast,
    sample_noise_trivial,
)
from .stats import (
    KnockoffStats,
    group_chi_square,
    group_chi_square_scores,
    group_knockoff_stats,
    knockoff_stats,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "available_backends",
    "BlockDiagonalD",
    "CholeskyFactor",
    "ClusterConfig",
    "CorrelationMatrix",
    "FactorizationError",
    "FilterConfig",
    "FilterOutcome",
    "GroupStructure",
    "KnockoffModel",
    "KnockoffScores",
    "KnockoffStats",
    "RandomSeed",
    "SVector",
    "ValidationError",
    "apply_perturbation",
    "assemble_v",
    "assemble_v1_v2",
    "build_model",
    "choose_M",
    "cholesky",
    "cluster",
    "constraint_margin",
    "derandomized_select",
    "fwer_filter",
    "group_chi_square",
    "group_chi_square_scores",
    "group_knockoff_stats",
    "inverse_spd",
    "janson_rule",
    "knockoff_stats",
    "load_correlation",
    "make_ar1",
    "make_compound_symmetry",
    "make_rng",
    "nb_threshold",
    "sample_knockoffs_fast",
    "sample_knockoffs_trivial",
    "sample_noise_fast",
    "sample_noise_trivial",
    "save_correlation",
    "singleton_groups",
    "solve_equi",
    "solve_group_equi",
    "solve_sdp",
    "cholesky",
]

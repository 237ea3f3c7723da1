"""Covariate-balanced treatment assignment and randomization-based inference.

Library layout:

- :mod:`rebalance.balance` — covariate cache, Mahalanobis imbalance and
  its O(n) pair-switch update;
- :mod:`rebalance.designs` — CR, RR, GPS and PSRR samplers;
- :mod:`rebalance.sequential` — group-sequential variants and resumable
  sessions;
- :mod:`rebalance.distributions` — (non)central chi-square CDF/quantile;
- :mod:`rebalance.inference` — randomization tests and exact interval
  inversion;
- :mod:`rebalance.diagnostics` — randomness metrics and balance reports;
- :mod:`rebalance.bench` — the simulation benchmark harness;
- :mod:`rebalance.cli` — the ``rebalance`` command.
"""

from .balance import (
    Assignment,
    BalanceCache,
    CovariateMatrix,
    build_cache,
    mahalanobis,
    mahalanobis_delta,
)
from .bench import BenchConfig, generate_population, run_bench
from .designs import (
    DesignSpec,
    SampleTrace,
    resolve_threshold,
    sample,
    sample_cr,
    sample_gps,
    sample_many,
    sample_psrr,
    sample_rr,
    threshold_from_pa,
)
from .diagnostics import (
    entropy_metric,
    max_eig_metric,
    pair_same_group_proportions,
    priv,
    randomness_report,
    sd_metric,
    standardized_differences,
)
from .distributions import chi2_cdf, chi2_quantile
from .errors import (
    BracketFailure,
    DegenerateDesign,
    DimensionMismatch,
    DomainError,
    EigFailure,
    EmptyInput,
    InvalidSwitch,
    IterationCapExceeded,
    MissingBaseline,
    RebalanceError,
    SingularCovariance,
)
from .inference import (
    CiResult,
    FrtResult,
    ObservedExperiment,
    ci_bisection,
    ci_exact,
    diff_in_means,
    frt,
)
from .rng import derive_seed, stream
from .sequential import (
    Schedule,
    SeqSession,
    load_session,
    new_session,
    replay_assignment,
    save_session,
    seq_mahalanobis,
    seq_next_group,
    seq_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "BalanceCache",
    "BenchConfig",
    "BracketFailure",
    "CiResult",
    "CovariateMatrix",
    "DegenerateDesign",
    "DesignSpec",
    "DimensionMismatch",
    "DomainError",
    "EigFailure",
    "EmptyInput",
    "FrtResult",
    "InvalidSwitch",
    "IterationCapExceeded",
    "MissingBaseline",
    "ObservedExperiment",
    "RebalanceError",
    "SampleTrace",
    "Schedule",
    "SeqSession",
    "SingularCovariance",
    "build_cache",
    "chi2_cdf",
    "chi2_quantile",
    "ci_bisection",
    "ci_exact",
    "derive_seed",
    "diff_in_means",
    "entropy_metric",
    "frt",
    "generate_population",
    "load_session",
    "mahalanobis",
    "mahalanobis_delta",
    "max_eig_metric",
    "new_session",
    "pair_same_group_proportions",
    "priv",
    "randomness_report",
    "replay_assignment",
    "resolve_threshold",
    "run_bench",
    "sample",
    "sample_cr",
    "sample_gps",
    "sample_many",
    "sample_psrr",
    "sample_rr",
    "save_session",
    "sd_metric",
    "seq_mahalanobis",
    "seq_next_group",
    "seq_threshold",
    "standardized_differences",
    "stream",
    "threshold_from_pa",
]

"""Randomization tests and confidence intervals by test inversion.

The test statistic throughout is the difference in means.  The
randomization p-value for the sharp null of no effect is two-sided:
the proportion of resampled |stat| values greater than or equal to the
observed |stat| (ties count, comparison is >=).

Interval endpoints come from inverting the one-sided tests of a
constant hypothetical effect theta.  Under that null the imputed
statistic of a resampled assignment is linear and increasing in theta,
so each resample contributes one jump point

    theta_b = [sum_{obs=1, b=0} Y_i  -  sum_{obs=0, b=1} Y_i] / n_dif,

the theta at which its statistic crosses the observed one (theta_b =
-inf for a resample equal to the observed assignment, by convention).
The lower 1-alpha confidence bound is then an order statistic of the
jump points: the (floor(alpha*B) + 1)-th smallest.  The upper bound
mirrors this with theta_b = +inf for the observed assignment and the
(B - floor(alpha*B))-th smallest; this mirrored rule is validated
against a grid-search inversion in the test suite.  Endpoints of the
two-sided 1-alpha interval use alpha/2 per side.

A bisection comparator is included for benchmarking: it inverts the
same p-value functions numerically on the same resamples (common random
numbers), so interval differences between the two routes are purely
algorithmic.

Convention note: the two-sided test uses |.| while the one-sided
inversion counts the right tail without absolute values; the two
follow different definitions on purpose and are not interchangeable.

When the design is complete randomization and the assignment space is
small (at most ``enumeration_cap``), Monte Carlo sampling is replaced
by full enumeration of the space, which makes p-values and intervals
exact.  Enumeration is only correct for CR because it weights every
assignment equally.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import designs, sequential
from .balance import build_cache
from .errors import BracketFailure, DegenerateDesign, DimensionMismatch
from .rng import derive_seed, stream

DEFAULT_ENUMERATION_CAP = 100_000


@dataclass(frozen=True)
class ObservedExperiment:
    """Observed data plus the design that generated the assignment.

    The design is replayed to draw resamples, which is what makes the
    tests valid: one analyzes with the same generator one designed with.
    """

    covariates: np.ndarray
    w_obs: np.ndarray
    outcomes: np.ndarray
    design: designs.DesignSpec | sequential.SeqSession

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=np.float64)
        w = np.asarray(self.w_obs)
        y = np.asarray(self.outcomes, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionMismatch("covariates must be 2-D")
        n = x.shape[0]
        if w.shape != (n,) or y.shape != (n,):
            raise DimensionMismatch(
                f"lengths disagree: covariates n={n}, w={w.shape}, outcomes={y.shape}"
            )
        if not np.all((w == 0) | (w == 1)):
            raise DimensionMismatch("observed assignment entries must be 0 or 1")
        if not np.all(np.isfinite(y)):
            raise DimensionMismatch("outcomes contain non-finite values")
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "w_obs", w.astype(np.int8))
        object.__setattr__(self, "outcomes", y)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_t(self) -> int:
        return int(self.w_obs.sum())


@dataclass
class FrtResult:
    p_value: float
    b: int
    tau_obs: float
    stats: np.ndarray
    seed: int
    enumerated: bool = False

    def to_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "b": self.b,
            "tau_obs": self.tau_obs,
            "seed": self.seed,
            "enumerated": self.enumerated,
        }


@dataclass
class CiResult:
    lower: float
    upper: float
    alpha: float
    jump_points_lower: np.ndarray
    jump_points_upper: np.ndarray
    method: str
    b: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "alpha": self.alpha,
            "method": self.method,
            "b": self.b,
            "seed": self.seed,
        }


def diff_in_means(outcomes, w) -> float:
    """Mean outcome of treated units minus mean outcome of controls."""
    y = np.asarray(outcomes, dtype=np.float64)
    w = np.asarray(w)
    if y.shape != w.shape or y.ndim != 1:
        raise DimensionMismatch(f"shape mismatch: outcomes {y.shape}, w {w.shape}")
    n_t = int(w.sum())
    if not 0 < n_t < w.shape[0]:
        raise DimensionMismatch("both groups must be non-empty")
    mask = w == 1
    return float(y[mask].mean() - y[~mask].mean())


def _enumerable(exp: ObservedExperiment, cap: int) -> bool:
    return (
        isinstance(exp.design, designs.DesignSpec)
        and exp.design.method == "cr"
        and math.comb(exp.n, exp.n_t) <= cap
    )


def _enumerate_assignments(n: int, n_t: int) -> np.ndarray:
    rows = np.zeros((math.comb(n, n_t), n), dtype=np.int8)
    for b, idx in enumerate(itertools.combinations(range(n), n_t)):
        rows[b, list(idx)] = 1
    return rows


def draw_assignment_matrix(
    exp: ObservedExperiment,
    b: int,
    seed: int,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[np.ndarray, bool]:
    """B resampled assignments (rows), or the full enumerated space.

    Replicate i of a non-sequential design uses stream (seed, i); a
    sequential design is replayed group by group under a child seed
    derived from (seed, i).  The observed assignment is never forced
    into the Monte Carlo set.
    """
    if b < 1:
        raise DimensionMismatch(f"replicate count must be >= 1, got {b}")
    if _enumerable(exp, enumeration_cap):
        return _enumerate_assignments(exp.n, exp.n_t), True
    if isinstance(exp.design, sequential.SeqSession):
        rows = np.empty((b, exp.n), dtype=np.int8)
        for i in range(b):
            rows[i], _ = sequential.replay_assignment(exp.design, derive_seed(seed, i))
        return rows, False
    cache = build_cache(exp.covariates, exp.design.n_t)
    rows = np.empty((b, exp.n), dtype=np.int8)
    for i in range(b):
        rows[i] = designs.sample(cache, exp.design, stream(seed, i)).assignment
    return rows, False


def frt(
    exp: ObservedExperiment,
    b: int,
    seed: int,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
    plus_one: bool = False,
) -> FrtResult:
    """Two-sided randomization test of the sharp null of no effect.

    The p-value is the plain proportion of resampled |stat| >= observed
    |stat|.  ``plus_one=True`` switches to (1 + count) / (1 + B), a
    conservative variant that is valid at any finite B.
    """
    w_mat, enumerated = draw_assignment_matrix(exp, b, seed, enumeration_cap)
    tau_obs = diff_in_means(exp.outcomes, exp.w_obs)
    stats = np.array([diff_in_means(exp.outcomes, row) for row in w_mat])
    count = int(np.count_nonzero(np.abs(stats) >= abs(tau_obs)))
    b_used = w_mat.shape[0]
    p = (1 + count) / (1 + b_used) if plus_one else count / b_used
    return FrtResult(
        p_value=float(p),
        b=b_used,
        tau_obs=tau_obs,
        stats=stats,
        seed=seed,
        enumerated=enumerated,
    )


def _theta_jumps(y: np.ndarray, w_obs: np.ndarray, w_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Jump points theta_b for every resample, and the obs-equal mask."""
    w_obs = w_obs.astype(np.float64)
    w_mat = w_mat.astype(np.float64)
    n_dif = (1.0 - w_mat) @ w_obs
    numer = (1.0 - w_mat) @ (w_obs * y) - w_mat @ ((1.0 - w_obs) * y)
    is_obs = n_dif == 0
    theta = np.full(w_mat.shape[0], np.nan)
    np.divide(numer, n_dif, out=theta, where=~is_obs)
    return theta, is_obs


def _exact_endpoints(theta: np.ndarray, is_obs: np.ndarray, alpha: float) -> tuple[float, float, np.ndarray, np.ndarray]:
    b = theta.shape[0]
    lower_jumps = np.sort(np.where(is_obs, -np.inf, theta))
    upper_jumps = np.sort(np.where(is_obs, np.inf, theta))
    # floor(alpha/2 * B) in exact rational arithmetic: a float product can
    # land one ulp under an integer and shift the order statistic.
    cut = int(Fraction(alpha) / 2 * b)
    lower = float(lower_jumps[cut])
    upper = float(upper_jumps[b - cut - 1])
    return lower, upper, lower_jumps, upper_jumps


def ci_exact(
    exp: ObservedExperiment,
    b: int,
    alpha: float,
    seed: int,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> CiResult:
    """Two-sided 1-alpha interval from the order statistics of the jump points."""
    if not 0 < alpha < 1:
        raise DimensionMismatch(f"alpha must be in (0, 1), got {alpha}")
    w_mat, _ = draw_assignment_matrix(exp, b, seed, enumeration_cap)
    theta, is_obs = _theta_jumps(exp.outcomes, exp.w_obs, w_mat)
    if bool(is_obs.all()):
        raise DegenerateDesign("every resampled assignment equals the observed one")
    lower, upper, lower_jumps, upper_jumps = _exact_endpoints(theta, is_obs, alpha)
    return CiResult(
        lower=lower,
        upper=upper,
        alpha=alpha,
        jump_points_lower=lower_jumps,
        jump_points_upper=upper_jumps,
        method="exact",
        b=w_mat.shape[0],
        seed=seed,
    )


def _stat_matrix_at(theta: float, y: np.ndarray, w_obs: np.ndarray, w_mat_f: np.ndarray,
                    n_t: int, n_c: int) -> np.ndarray:
    # Impute potential outcomes under a constant effect theta, then take
    # the difference in means for every resample at once.
    y1 = y + theta * (1.0 - w_obs)
    y0 = y - theta * w_obs
    return w_mat_f @ y1 / n_t - (1.0 - w_mat_f) @ y0 / n_c


def _bisection_endpoints(
    y: np.ndarray,
    w_obs: np.ndarray,
    w_mat: np.ndarray,
    alpha: float,
    tol: float | None,
) -> tuple[float, float]:
    w_obs_f = w_obs.astype(np.float64)
    w_mat_f = w_mat.astype(np.float64)
    n_t = int(w_obs.sum())
    n_c = w_obs.shape[0] - n_t
    tau_obs = diff_in_means(y, w_obs)
    stats = _stat_matrix_at(0.0, y, w_obs_f, w_mat_f, n_t, n_c)
    spread = float(np.std(stats, ddof=1)) if stats.shape[0] > 1 else 0.0
    if spread == 0.0:
        raise BracketFailure("replicate statistics are constant; bracket has no width")
    lo0, hi0 = tau_obs - 20.0 * spread, tau_obs + 20.0 * spread
    if tol is None:
        tol = 1e-6 * (hi0 - lo0)
    half = alpha / 2.0

    def p_lower(t: float) -> float:
        return float(np.mean(_stat_matrix_at(t, y, w_obs_f, w_mat_f, n_t, n_c) >= tau_obs))

    def p_upper(t: float) -> float:
        return float(np.mean(_stat_matrix_at(t, y, w_obs_f, w_mat_f, n_t, n_c) <= tau_obs))

    if not (p_lower(lo0) <= half < p_lower(hi0)):
        raise BracketFailure(
            f"lower p-value does not straddle alpha/2 on [{lo0:g}, {hi0:g}]"
        )
    lo, hi = lo0, hi0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if p_lower(mid) <= half:
            lo = mid
        else:
            hi = mid
    lower = lo

    if not (p_upper(hi0) <= half < p_upper(lo0)):
        raise BracketFailure(
            f"upper p-value does not straddle alpha/2 on [{lo0:g}, {hi0:g}]"
        )
    lo, hi = lo0, hi0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if p_upper(mid) <= half:
            hi = mid
        else:
            lo = mid
    upper = hi
    return lower, upper


def ci_bisection(
    exp: ObservedExperiment,
    b: int,
    alpha: float,
    seed: int,
    tol: float | None = None,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> CiResult:
    """Numerical inversion on the same resamples ``ci_exact`` would use.

    Never narrower than the exact interval: each bisection returns the
    bracket end on the accepting side of the step function.
    """
    if not 0 < alpha < 1:
        raise DimensionMismatch(f"alpha must be in (0, 1), got {alpha}")
    w_mat, _ = draw_assignment_matrix(exp, b, seed, enumeration_cap)
    theta, is_obs = _theta_jumps(exp.outcomes, exp.w_obs, w_mat)
    if bool(is_obs.all()):
        raise DegenerateDesign("every resampled assignment equals the observed one")
    lower, upper = _bisection_endpoints(exp.outcomes, exp.w_obs, w_mat, alpha, tol)
    return CiResult(
        lower=lower,
        upper=upper,
        alpha=alpha,
        jump_points_lower=np.sort(np.where(is_obs, -np.inf, theta)),
        jump_points_upper=np.sort(np.where(is_obs, np.inf, theta)),
        method="bisection",
        b=w_mat.shape[0],
        seed=seed,
    )


def time_endpoint_methods(
    y: np.ndarray, w_obs: np.ndarray, w_mat: np.ndarray, alpha: float
) -> tuple[float, float, tuple[float, float], tuple[float, float]]:
    """Wall time of exact vs bisection endpoint determination on shared resamples."""
    t0 = time.perf_counter()
    theta, is_obs = _theta_jumps(np.asarray(y, dtype=np.float64), np.asarray(w_obs), w_mat)
    lower_e, upper_e, _, _ = _exact_endpoints(theta, is_obs, alpha)
    t_exact = time.perf_counter() - t0
    t0 = time.perf_counter()
    lower_b, upper_b = _bisection_endpoints(
        np.asarray(y, dtype=np.float64), np.asarray(w_obs), w_mat, alpha, None
    )
    t_bisect = time.perf_counter() - t0
    return t_exact, t_bisect, (lower_e, upper_e), (lower_b, upper_b)

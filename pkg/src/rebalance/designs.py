"""Non-sequential assignment samplers: CR, RR, GPS and PSRR.

All samplers are pure functions of (cache, spec, rng): identical inputs
give bit-identical traces, and replicates drawn from disjoint derived
streams can run fully in parallel.

Iteration accounting follows one rule: ``inner_iters`` counts candidate
assignments evaluated, ``outer_iters`` counts redraws (RR) or accepted
moves (GPS, PSRR).  The total work of a draw is therefore
``inner_iters`` for every method (RR evaluates one candidate per
redraw, so its inner and outer counts coincide).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .balance import (
    RECOMPUTE_EVERY,
    BalanceCache,
    mahalanobis,
    mahalanobis_delta,
    mahalanobis_delta_grid,
)
from .distributions import chi2_quantile
from .errors import DimensionMismatch, IterationCapExceeded
from .rng import stream

METHODS = ("cr", "rr", "gps", "psrr")

DEFAULT_GAMMA = 10.0
DEFAULT_MAX_TOTAL_ITERS = 10_000_000


@dataclass(frozen=True)
class DesignSpec:
    """Method selector plus parameters for one assignment design.

    The balance threshold is given either directly (``threshold``) or as
    an acceptance probability (``acceptance_prob``), in which case the
    threshold is the chi-square quantile at that probability with p
    (covariate count) degrees of freedom.  CR takes neither; GPS may
    carry one for reporting only.
    """

    method: str
    n_t: int
    threshold: float | None = None
    acceptance_prob: float | None = None
    gamma: float = DEFAULT_GAMMA
    max_total_iters: int = DEFAULT_MAX_TOTAL_ITERS
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise DimensionMismatch(
                f"unknown method {self.method!r}, expected one of {METHODS}"
            )
        if self.n_t < 1:
            raise DimensionMismatch(f"n_t must be >= 1, got {self.n_t}")
        if self.threshold is not None and self.acceptance_prob is not None:
            raise DimensionMismatch("give either threshold or acceptance_prob, not both")
        if self.threshold is not None and not self.threshold > 0:
            raise DimensionMismatch(f"threshold must be > 0, got {self.threshold}")
        if self.acceptance_prob is not None and not 0 < self.acceptance_prob < 1:
            raise DimensionMismatch(
                f"acceptance_prob must be in (0, 1), got {self.acceptance_prob}"
            )
        if self.method in ("rr", "psrr") and self.threshold is None and self.acceptance_prob is None:
            raise DimensionMismatch(f"method {self.method!r} requires threshold or acceptance_prob")
        if self.gamma < 0:
            raise DimensionMismatch(f"gamma must be >= 0, got {self.gamma}")
        if self.max_total_iters < 1:
            raise DimensionMismatch("max_total_iters must be >= 1")


@dataclass
class SampleTrace:
    """One sampled assignment plus its iteration and timing accounting."""

    assignment: np.ndarray
    final_m: float
    inner_iters: int
    outer_iters: int
    wall_clock: float
    threshold: float = math.inf
    forced_stop: bool = False

    @property
    def total_iters(self) -> int:
        return max(self.inner_iters, self.outer_iters)

    @property
    def meets_threshold(self) -> bool:
        return self.final_m <= self.threshold


def threshold_from_pa(p: int, p_a: float) -> float:
    """Threshold a with asymptotic acceptance probability p_a = P(chi2_p < a)."""
    if not 0 < p_a < 1:
        raise DimensionMismatch(f"acceptance probability must be in (0, 1), got {p_a}")
    return chi2_quantile(p_a, p, 0.0)


def resolve_threshold(spec: DesignSpec, p: int) -> float:
    """Concrete threshold for a spec: direct, via p_a, or +inf when absent."""
    if spec.threshold is not None:
        return float(spec.threshold)
    if spec.acceptance_prob is not None:
        return threshold_from_pa(p, spec.acceptance_prob)
    return math.inf


def _cr_draw(rng: np.random.Generator, n: int, n_t: int) -> np.ndarray:
    w = np.zeros(n, dtype=np.float64)
    w[rng.permutation(n)[:n_t]] = 1.0
    return w


def _finish(w: np.ndarray, m: float, inner: int, outer: int, t0: float,
            threshold: float, forced: bool = False) -> SampleTrace:
    return SampleTrace(
        assignment=w.astype(np.int8),
        final_m=m,
        inner_iters=inner,
        outer_iters=outer,
        wall_clock=time.perf_counter() - t0,
        threshold=threshold,
        forced_stop=forced,
    )


def sample_cr(cache: BalanceCache, spec: DesignSpec, rng: np.random.Generator) -> SampleTrace:
    """One completely randomized assignment (uniform over fixed-margin vectors)."""
    _check_spec(cache, spec, "cr")
    t0 = time.perf_counter()
    w = _cr_draw(rng, cache.n, cache.n_t)
    return _finish(w, mahalanobis(cache, w), 1, 1, t0, math.inf)


def sample_rr(cache: BalanceCache, spec: DesignSpec, rng: np.random.Generator) -> SampleTrace:
    """Acceptance-rejection: redraw CR assignments until M <= a."""
    _check_spec(cache, spec, "rr")
    a = resolve_threshold(spec, cache.p)
    t0 = time.perf_counter()
    best_w, best_m = None, math.inf
    draws = 0
    while True:
        if draws >= spec.max_total_iters:
            raise IterationCapExceeded(
                f"no assignment with M <= {a:g} in {draws} draws (best M = {best_m:g})",
                best_assignment=best_w.astype(np.int8),
                best_m=best_m,
            )
        w = _cr_draw(rng, cache.n, cache.n_t)
        m = mahalanobis(cache, w)
        draws += 1
        if m < best_m:
            best_w, best_m = w, m
        if m <= a:
            return _finish(w, m, draws, draws, t0, a)


def sample_gps(cache: BalanceCache, spec: DesignSpec, rng: np.random.Generator) -> SampleTrace:
    """Greedy pair switching: steepest descent to a switch-local optimum.

    Each outer step evaluates every treated/control switch and moves to
    the strict minimum (ties broken by lowest (treated, control) index
    pair, so runs are deterministic given the seed).  Terminates at a
    local optimum regardless of any threshold; the trace records the
    threshold so reports can flag whether it was met.
    """
    _check_spec(cache, spec, "gps")
    a = resolve_threshold(spec, cache.p)
    t0 = time.perf_counter()
    w = _cr_draw(rng, cache.n, cache.n_t)
    m = mahalanobis(cache, w)
    inner = 0
    outer = 0
    while True:
        outer += 1
        treated = np.flatnonzero(w == 1)
        controls = np.flatnonzero(w == 0)
        inner += treated.size * controls.size
        if inner > spec.max_total_iters:
            raise IterationCapExceeded(
                f"switch evaluations exceeded {spec.max_total_iters}",
                best_assignment=w.astype(np.int8),
                best_m=m,
            )
        grid = mahalanobis_delta_grid(cache, w, m, treated, controls)
        flat = int(np.argmin(grid))
        m_min = float(grid.flat[flat])
        if not m_min < m:
            return _finish(w, m, inner, outer, t0, a)
        i = treated[flat // controls.size]
        j = controls[flat % controls.size]
        w[i], w[j] = 0.0, 1.0
        m = m_min


def _psrr_chain(
    cache: BalanceCache,
    w: np.ndarray,
    m: float,
    a: float,
    gamma: float,
    rng: np.random.Generator,
    treated_idx: np.ndarray,
    control_idx: np.ndarray,
    proposal_cap: int,
):
    """Metropolis-style pair-switching walk until M <= a or the cap is hit.

    Proposals are uniform over (treated, control) pairs; a proposal with
    ratio M/M* >= 1 is always accepted, otherwise accepted with
    probability (M/M*)^gamma.  One uniform variate is consumed per
    proposal regardless of the ratio, so the stream layout does not
    depend on the data.

    Returns (w, m, inner, outer, forced, best_w, best_m); ``best`` is the
    minimum-M state the chain visited (initial state included).
    """
    inner = 0
    outer = 0
    best_w, best_m = (w.copy(), m) if m > a else (None, m)
    n_t, n_c = treated_idx.size, control_idx.size
    while m > a:
        if inner >= proposal_cap:
            return w, m, inner, outer, True, best_w, best_m
        ti = int(rng.integers(n_t))
        ci = int(rng.integers(n_c))
        i = int(treated_idx[ti])
        j = int(control_idx[ci])
        m_star = mahalanobis_delta(cache, w, m, i, j)
        inner += 1
        if m_star <= m or gamma == 0.0:
            prob = 1.0
        elif m == 0.0:
            prob = 0.0
        else:
            prob = (m / m_star) ** gamma
        if rng.random() < prob:
            outer += 1
            w[i], w[j] = 0.0, 1.0
            treated_idx[ti], control_idx[ci] = j, i
            m = m_star
            if outer % RECOMPUTE_EVERY == 0:
                m = mahalanobis(cache, w)
            if m < best_m:
                best_w, best_m = w.copy(), m
    return w, m, inner, outer, False, best_w, best_m


def sample_psrr(cache: BalanceCache, spec: DesignSpec, rng: np.random.Generator) -> SampleTrace:
    """Pair-switching rerandomization: random-walk from a CR draw to M <= a."""
    _check_spec(cache, spec, "psrr")
    a = resolve_threshold(spec, cache.p)
    t0 = time.perf_counter()
    w = _cr_draw(rng, cache.n, cache.n_t)
    m = mahalanobis(cache, w)
    treated_idx = np.flatnonzero(w == 1).astype(np.int64)
    control_idx = np.flatnonzero(w == 0).astype(np.int64)
    w, m, inner, outer, forced, best_w, best_m = _psrr_chain(
        cache, w, m, a, spec.gamma, rng, treated_idx, control_idx, spec.max_total_iters
    )
    if forced:
        raise IterationCapExceeded(
            f"no assignment with M <= {a:g} in {inner} proposals (best M = {best_m:g})",
            best_assignment=best_w.astype(np.int8),
            best_m=best_m,
        )
    return _finish(w, m, inner, outer, t0, a)


_SAMPLERS = {"cr": sample_cr, "rr": sample_rr, "gps": sample_gps, "psrr": sample_psrr}


def _check_spec(cache: BalanceCache, spec: DesignSpec, method: str) -> None:
    if spec.method != method:
        raise DimensionMismatch(f"spec.method is {spec.method!r}, sampler expects {method!r}")
    if spec.n_t != cache.n_t:
        raise DimensionMismatch(f"spec.n_t={spec.n_t} does not match cache n_t={cache.n_t}")


def sample(cache: BalanceCache, spec: DesignSpec, rng: np.random.Generator) -> SampleTrace:
    """Dispatch to the sampler named by ``spec.method``."""
    return _SAMPLERS[spec.method](cache, spec, rng)


def sample_many(
    cache: BalanceCache,
    spec: DesignSpec,
    b: int,
    seed: int | None = None,
    threads: int = 1,
) -> list[SampleTrace]:
    """B independent draws over derived streams (seed, 0), ..., (seed, b-1).

    Replicates are embarrassingly parallel; ``threads`` only changes wall
    time, never results, because replicate i always uses stream (seed, i).
    """
    if b < 1:
        raise DimensionMismatch(f"replicate count must be >= 1, got {b}")
    base = spec.seed if seed is None else seed
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda i: sample(cache, spec, stream(base, i)), range(b)))
    return [sample(cache, spec, stream(base, i)) for i in range(b)]


def with_seed(spec: DesignSpec, seed: int) -> DesignSpec:
    return replace(spec, seed=seed)

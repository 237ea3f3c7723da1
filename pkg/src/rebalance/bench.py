"""Desk-scale reproduction of the reference simulation studies.

One bench run fixes a synthetic population (standard-normal covariates,
outcomes linear in the covariate row-sums with noise calibrated to a
target R-squared, constant additive effect), then replicates the whole
design/test/interval pipeline ``n_rep`` times per method.  Only the
assignments vary across replications, never the population.

Per replication and method: one observed assignment is drawn, ``b_frt``
resamples are drawn from the same design, and the shared resample set
feeds the size test (null outcome table), the power test (effect
table), and both interval-endpoint routes (exact and bisection, timed
separately on identical resamples).  Everything is keyed off derived
streams, so a bench run is a pure function of (config, seed).

Reported times: ``t_sample`` is the wall time to draw 1000 acceptable
assignments (measured on b_frt draws and rescaled); ``t_exact`` and
``t_bisect`` are mean endpoint-determination times.  Absolute seconds
are hardware-specific; ratios are the reproducible quantity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import designs, sequential
from .balance import build_cache
from .errors import DimensionMismatch
from .inference import diff_in_means, time_endpoint_methods
from .rng import derive_seed, stream

RESULT_COLUMNS = (
    "method",
    "bias",
    "sd",
    "size",
    "power",
    "cp",
    "length",
    "t_sample",
    "t_exact",
    "t_bisect",
    "iters_inner",
    "iters_outer",
    "iters_total",
)

_SEQ_METHODS = set(sequential.SEQ_METHODS)
_NONSEQ_METHODS = set(designs.METHODS)


@dataclass(frozen=True)
class SeqBenchSpec:
    group_sizes: tuple[int, ...]
    treated_sizes: tuple[int, ...]
    draws: tuple[float, ...]
    cap_multiplier: int = 10

    def schedule(self) -> sequential.Schedule:
        return sequential.Schedule(
            group_sizes=self.group_sizes,
            treated_sizes=self.treated_sizes,
            draws=self.draws,
            cap_multiplier=self.cap_multiplier,
        )


@dataclass(frozen=True)
class BenchConfig:
    n: int
    p: int
    r_squared: float
    effect_multiplier: float = 0.3
    n_rep: int = 200
    b_frt: int = 200
    methods: tuple[str, ...] = ("cr", "psrr")
    seed: int = 0
    alpha: float = 0.05
    acceptance_prob: float = 0.001
    gamma: float = 10.0
    n_t: int | None = None
    sequential: SeqBenchSpec | None = None
    enumeration_cap: int = 0

    def __post_init__(self):
        if not 0 < self.r_squared < 1:
            raise DimensionMismatch(f"r_squared must be in (0, 1), got {self.r_squared}")
        if self.n_rep < 1 or self.b_frt < 1:
            raise DimensionMismatch("n_rep and b_frt must be >= 1")
        if not 0 < self.alpha < 1:
            raise DimensionMismatch(f"alpha must be in (0, 1), got {self.alpha}")
        known = _SEQ_METHODS | _NONSEQ_METHODS
        for m in self.methods:
            if m not in known:
                raise DimensionMismatch(f"unknown bench method {m!r}")
        if any(m in _SEQ_METHODS for m in self.methods):
            if self.sequential is None:
                raise DimensionMismatch("sequential methods need a [sequential] block")
            if sum(self.sequential.group_sizes) != self.n:
                raise DimensionMismatch(
                    f"n={self.n} does not match the schedule total "
                    f"{sum(self.sequential.group_sizes)}"
                )

    @property
    def treated_count(self) -> int:
        return self.n // 2 if self.n_t is None else self.n_t


@dataclass(frozen=True)
class Population:
    x: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    tau: float


@dataclass
class BenchResult:
    rows: list[dict]
    iteration_samples: dict[str, np.ndarray] = field(default_factory=dict)
    config: BenchConfig | None = None


def generate_population(cfg: BenchConfig, rng: np.random.Generator) -> Population:
    """Fixed synthetic population: X iid N(0,1), Y(0) linear in the row sums.

    The noise variance sigma^2 = p (1 - R^2) / R^2 makes the population
    signal fraction equal the target R^2 (the signal variance of a
    p-term sum of independent standard normals is p).  The effect is a
    constant shift of ``effect_multiplier`` population SDs of Y(0), so
    the true average effect is exactly that shift.
    """
    x = rng.standard_normal((cfg.n, cfg.p))
    sigma2 = cfg.p * (1.0 - cfg.r_squared) / cfg.r_squared
    y0 = x.sum(axis=1) + rng.normal(0.0, np.sqrt(sigma2), cfg.n)
    tau = cfg.effect_multiplier * float(np.std(y0, ddof=1))
    y1 = y0 + tau
    return Population(x=x, y0=y0, y1=y1, tau=tau)


def _method_index(method: str) -> int:
    order = list(designs.METHODS) + list(sequential.SEQ_METHODS)
    return order.index(method)


def _draw_nonseq(cfg: BenchConfig, cache, method: str, rep: int):
    """Observed draw plus resample matrix for one replication.

    Returns (obs_trace, w_mat, mean_inner, mean_outer, totals, elapsed).
    With ``enumeration_cap`` set and a small CR space, the resample
    matrix is the full enumerated space (exact p-values), in which case
    iteration counts degenerate to one per assignment.
    """
    import math as _math

    from .inference import _enumerate_assignments

    spec = designs.DesignSpec(
        method=method,
        n_t=cfg.treated_count,
        acceptance_prob=cfg.acceptance_prob if method in ("rr", "psrr", "gps") else None,
        gamma=cfg.gamma,
    )
    mi = _method_index(method)
    obs = designs.sample(cache, spec, stream(cfg.seed, 1, mi, rep))
    if (
        cfg.enumeration_cap
        and method == "cr"
        and _math.comb(cfg.n, cfg.treated_count) <= cfg.enumeration_cap
    ):
        t0 = time.perf_counter()
        w_mat = _enumerate_assignments(cfg.n, cfg.treated_count)
        elapsed = time.perf_counter() - t0
        n_draws = w_mat.shape[0]
        return obs, w_mat, 1.0, 1.0, [1.0], elapsed * (1000.0 / n_draws)
    t0 = time.perf_counter()
    traces = [
        designs.sample(cache, spec, stream(cfg.seed, 2, mi, rep, b)) for b in range(cfg.b_frt)
    ]
    elapsed = time.perf_counter() - t0
    w_mat = np.stack([t.assignment for t in traces])
    mean_inner = float(np.mean([t.inner_iters for t in traces]))
    mean_outer = float(np.mean([t.outer_iters for t in traces]))
    totals = [t.total_iters for t in traces[: min(50, len(traces))]]
    return obs, w_mat, mean_inner, mean_outer, totals, elapsed * (1000.0 / cfg.b_frt)


def _draw_seq(cfg: BenchConfig, pop: Population, method: str, rep: int):
    schedule = cfg.sequential.schedule()
    groups = [
        pop.x[schedule.offset(k) : schedule.offset(k) + schedule.group_sizes[k - 1]]
        for k in range(1, schedule.k_total + 1)
    ]
    mi = _method_index(method)

    def one(seed: int) -> tuple[np.ndarray, int, int]:
        session = sequential.new_session(schedule, method, seed, cfg.gamma)
        session, traces = sequential.run_groups(session, groups)
        inner = sum(t.inner_iters for t in traces)
        outer = sum(t.outer_iters for t in traces)
        return np.asarray(session.assignment), inner, outer

    obs_w, obs_inner, obs_outer = one(derive_seed(cfg.seed, 1, mi, rep))
    t0 = time.perf_counter()
    draws = [one(derive_seed(cfg.seed, 2, mi, rep, b)) for b in range(cfg.b_frt)]
    elapsed = time.perf_counter() - t0
    return (obs_w, obs_inner, obs_outer), draws, elapsed


def _rejects(y: np.ndarray, w_obs: np.ndarray, w_mat: np.ndarray, alpha: float) -> bool:
    tau_obs = diff_in_means(y, w_obs)
    stats = np.array([diff_in_means(y, row) for row in w_mat])
    p = float(np.count_nonzero(np.abs(stats) >= abs(tau_obs))) / w_mat.shape[0]
    return p <= alpha


def run_bench(cfg: BenchConfig) -> BenchResult:
    """Run every configured method against one fixed population."""
    pop = generate_population(cfg, stream(cfg.seed, 0))
    cache = None
    if any(m in _NONSEQ_METHODS for m in cfg.methods):
        cache = build_cache(pop.x, cfg.treated_count)

    rows = []
    iter_samples: dict[str, np.ndarray] = {}
    for method in cfg.methods:
        tau_hats = np.empty(cfg.n_rep)
        reject_null = np.empty(cfg.n_rep, dtype=bool)
        reject_eff = np.empty(cfg.n_rep, dtype=bool)
        covered = np.empty(cfg.n_rep, dtype=bool)
        lengths = np.empty(cfg.n_rep)
        t_sample = np.empty(cfg.n_rep)
        t_exact = np.empty(cfg.n_rep)
        t_bisect = np.empty(cfg.n_rep)
        inner = np.empty(cfg.n_rep)
        outer = np.empty(cfg.n_rep)
        totals = []

        for rep in range(cfg.n_rep):
            if method in _NONSEQ_METHODS:
                obs, w_mat, mean_inner, mean_outer, rep_totals, per_1k = _draw_nonseq(
                    cfg, cache, method, rep
                )
                w_obs = np.asarray(obs.assignment)
                inner[rep] = mean_inner
                outer[rep] = mean_outer
                totals.extend(rep_totals)
            else:
                (w_obs, _, _), draws, elapsed = _draw_seq(cfg, pop, method, rep)
                w_mat = np.stack([d[0] for d in draws])
                inner[rep] = np.mean([d[1] for d in draws])
                outer[rep] = np.mean([d[2] for d in draws])
                totals.extend(d[1] for d in draws[: min(50, len(draws))])
                per_1k = elapsed * (1000.0 / cfg.b_frt)

            t_sample[rep] = per_1k
            y_eff = np.where(w_obs == 1, pop.y1, pop.y0)
            tau_hats[rep] = diff_in_means(y_eff, w_obs)
            reject_null[rep] = _rejects(pop.y0, w_obs, w_mat, cfg.alpha)
            reject_eff[rep] = _rejects(y_eff, w_obs, w_mat, cfg.alpha)
            te, tb, (lo, hi), _ = time_endpoint_methods(y_eff, w_obs, w_mat, cfg.alpha)
            t_exact[rep] = te
            t_bisect[rep] = tb
            covered[rep] = lo <= pop.tau <= hi
            lengths[rep] = hi - lo

        rows.append(
            {
                "method": method,
                "bias": abs(float(tau_hats.mean()) - pop.tau),
                "sd": float(np.std(tau_hats, ddof=1)),
                "size": float(reject_null.mean()),
                "power": float(reject_eff.mean()),
                "cp": float(covered.mean()),
                "length": float(lengths.mean()),
                "t_sample": float(t_sample.mean()),
                "t_exact": float(t_exact.mean()),
                "t_bisect": float(t_bisect.mean()),
                "iters_inner": float(inner.mean()),
                "iters_outer": float(outer.mean()),
                "iters_total": float(np.mean([max(i, o) for i, o in zip(inner, outer)])),
            }
        )
        iter_samples[method] = np.asarray(totals, dtype=np.float64)
    return BenchResult(rows=rows, iteration_samples=iter_samples, config=cfg)

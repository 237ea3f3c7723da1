"""Group-sequential designs: SeqCR, SeqRR and SeqPSRR.

Units arrive in K groups.  Group k is assigned by rerandomizing only its
own n_k units while the imbalance criterion M_k is evaluated over all
units enrolled so far (earlier groups' assignments are frozen).  The
per-group threshold is

    a_k = (n_k / n_{1:k}) * q_k,

with q_k the lower 1/s_k quantile of the noncentral chi-square with p
degrees of freedom and noncentrality n_{1:(k-1)} * M_{k-1} / n_k, where
s_k is the expected draw budget for group k (M_0 = 0).  The probability
1/s_k is clamped to [1e-12, 1 - 1e-12] so s_k = 1 degenerates gracefully
into a plain CR step.

Both rerandomizing methods carry a compute budget of ``cap_multiplier``
(default 10) times s_k.  SeqRR caps redraws at cap * s_k.  SeqPSRR
proposes switches rather than full redraws, so its budget is expressed
in proposals: cap * s_k * n_tk * n_ck, which is the comparable amount of
work.  On a budget hit the group is assigned the best (minimum-M_k)
candidate seen, and the trace is flagged ``forced_stop``.

Sessions are resumable: the JSON document written by ``save_session``
stores the full covariate history and per-group draw counters, and
reloading it mid-trial reproduces an uninterrupted run bit for bit
because group k always consumes the stream derived from (base_seed, k).
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from .balance import build_cache, mahalanobis
from .designs import SampleTrace, _cr_draw, _psrr_chain
from .distributions import chi2_quantile
from .errors import DimensionMismatch
from .rng import stream

SEQ_METHODS = ("seqcr", "seqrr", "seqpsrr")

SESSION_FORMAT_VERSION = 1

_PROB_CLAMP = 1e-12

# Draw budgets used in the reference simulations, by number of groups.
PRESET_DRAW_BUDGETS = {
    3: (30, 136, 834),
    5: (10, 10, 29, 133, 818),
    10: (10, 10, 10, 10, 10, 10, 10, 28, 128, 774),
}


@dataclass(frozen=True)
class Schedule:
    """Group sizes, treated counts and expected draw budgets for K groups."""

    group_sizes: tuple[int, ...]
    treated_sizes: tuple[int, ...]
    draws: tuple[float, ...]
    cap_multiplier: int = 10

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(v) for v in self.group_sizes))
        object.__setattr__(self, "treated_sizes", tuple(int(v) for v in self.treated_sizes))
        object.__setattr__(self, "draws", tuple(float(v) for v in self.draws))
        k = len(self.group_sizes)
        if k < 1:
            raise DimensionMismatch("schedule needs at least one group")
        if len(self.treated_sizes) != k or len(self.draws) != k:
            raise DimensionMismatch("group_sizes, treated_sizes and draws must have equal length")
        for nk, ntk in zip(self.group_sizes, self.treated_sizes):
            if not 0 < ntk < nk:
                raise DimensionMismatch(f"need 0 < n_tk < n_k, got n_tk={ntk}, n_k={nk}")
        if any(s < 1 for s in self.draws):
            raise DimensionMismatch("every draw budget s_k must be >= 1")
        if self.cap_multiplier < 1:
            raise DimensionMismatch("cap_multiplier must be >= 1")

    @property
    def k_total(self) -> int:
        return len(self.group_sizes)

    @property
    def n_total(self) -> int:
        return sum(self.group_sizes)

    def offset(self, k: int) -> int:
        """Index of group k's first unit (1-based k)."""
        return sum(self.group_sizes[: k - 1])


@dataclass(frozen=True)
class SeqSession:
    """State of a group-sequential trial after ``k_done`` groups."""

    schedule: Schedule
    method: str
    gamma: float
    base_seed: int
    k_done: int = 0
    covariates: np.ndarray | None = None
    assignment: np.ndarray | None = None
    m_history: tuple[float, ...] = ()
    draw_counters: tuple[int, ...] = ()

    def __post_init__(self):
        if self.method not in SEQ_METHODS:
            raise DimensionMismatch(
                f"unknown sequential method {self.method!r}, expected one of {SEQ_METHODS}"
            )
        if self.gamma < 0:
            raise DimensionMismatch(f"gamma must be >= 0, got {self.gamma}")

    @property
    def complete(self) -> bool:
        return self.k_done >= self.schedule.k_total

    @property
    def p(self) -> int | None:
        return None if self.covariates is None else self.covariates.shape[1]

    def group_covariates(self, k: int) -> np.ndarray:
        """Stored covariate rows of group k (1-based, k <= k_done)."""
        if not 1 <= k <= self.k_done:
            raise DimensionMismatch(f"group {k} not recorded (k_done={self.k_done})")
        lo = self.schedule.offset(k)
        return self.covariates[lo : lo + self.schedule.group_sizes[k - 1]]


def new_session(schedule: Schedule, method: str, base_seed: int, gamma: float = 10.0) -> SeqSession:
    return SeqSession(schedule=schedule, method=method, gamma=float(gamma), base_seed=int(base_seed))


def seq_threshold(session: SeqSession, k: int, p: int | None = None) -> float:
    """Per-group threshold a_k from the draw budget and the running M history."""
    if k != session.k_done + 1:
        raise DimensionMismatch(f"can only compute the next group's threshold (k={session.k_done + 1})")
    if p is None:
        p = session.p
    if p is None:
        raise DimensionMismatch("covariate count unknown; pass p for the first group")
    sched = session.schedule
    n_k = sched.group_sizes[k - 1]
    n_prefix = sum(sched.group_sizes[: k - 1])
    m_prev = session.m_history[k - 2] if k >= 2 else 0.0
    prob = min(max(1.0 / sched.draws[k - 1], _PROB_CLAMP), 1.0 - _PROB_CLAMP)
    lam = n_prefix * m_prev / n_k
    q_k = chi2_quantile(prob, p, lam)
    return n_k / (n_prefix + n_k) * q_k


def _stack(session: SeqSession, group_covariates: np.ndarray) -> np.ndarray:
    x_k = np.asarray(group_covariates, dtype=np.float64)
    k = session.k_done + 1
    n_k = session.schedule.group_sizes[k - 1]
    if x_k.ndim != 2 or x_k.shape[0] != n_k:
        raise DimensionMismatch(
            f"group {k} covariates must have {n_k} rows, got shape {x_k.shape}"
        )
    if session.covariates is not None and x_k.shape[1] != session.p:
        raise DimensionMismatch(
            f"group {k} has {x_k.shape[1]} covariates, session has p={session.p}"
        )
    if session.covariates is None:
        return x_k
    return np.vstack([session.covariates, x_k])


def seq_mahalanobis(session: SeqSession, group_covariates, candidate) -> float:
    """M_k of ``candidate`` for the next group, given the frozen prefix.

    Evaluated over all n_{1:k} units with the covariance of the stacked
    covariates; reduces to the non-sequential distance when K = 1.
    """
    candidate = np.asarray(candidate, dtype=np.float64)
    k = session.k_done + 1
    n_tk = session.schedule.treated_sizes[k - 1]
    if candidate.shape != (session.schedule.group_sizes[k - 1],):
        raise DimensionMismatch("candidate length does not match the next group size")
    if int(candidate.sum()) != n_tk:
        raise DimensionMismatch(f"candidate must have exactly {n_tk} treated units")
    x = _stack(session, group_covariates)
    n_t_cum = sum(session.schedule.treated_sizes[:k])
    cache = build_cache(x, n_t_cum)
    prefix = session.assignment if session.assignment is not None else np.zeros(0)
    w = np.concatenate([np.asarray(prefix, dtype=np.float64), candidate])
    return mahalanobis(cache, w)


def seq_next_group(
    session: SeqSession,
    group_covariates,
    rng: np.random.Generator | None = None,
) -> tuple[SeqSession, SampleTrace]:
    """Assign the next group and return the extended session plus its trace.

    The default stream for group k is derived from (base_seed, k), which
    is what makes interrupted sessions replayable.
    """
    if session.complete:
        raise DimensionMismatch("session already complete; no further groups expected")
    k = session.k_done + 1
    sched = session.schedule
    n_k = sched.group_sizes[k - 1]
    n_tk = sched.treated_sizes[k - 1]
    x = _stack(session, group_covariates)
    p = x.shape[1]
    a_k = seq_threshold(session, k, p=p)
    if rng is None:
        rng = stream(session.base_seed, k)

    n_t_cum = sum(sched.treated_sizes[:k])
    cache = build_cache(x, n_t_cum)
    offset = sched.offset(k)
    prefix = (
        np.asarray(session.assignment, dtype=np.float64)
        if session.assignment is not None
        else np.zeros(0)
    )

    t0 = time.perf_counter()
    if session.method == "seqcr":
        w_k = _cr_draw(rng, n_k, n_tk)
        w = np.concatenate([prefix, w_k])
        m = mahalanobis(cache, w)
        inner = outer = 1
        forced = False
    elif session.method == "seqrr":
        cap = int(math.ceil(sched.cap_multiplier * sched.draws[k - 1]))
        best_w, best_m = None, math.inf
        forced = True
        inner = 0
        for _ in range(cap):
            w_k = _cr_draw(rng, n_k, n_tk)
            w = np.concatenate([prefix, w_k])
            m = mahalanobis(cache, w)
            inner += 1
            if m < best_m:
                best_w, best_m = w, m
            if m <= a_k:
                forced = False
                break
        if forced:
            w, m = best_w, best_m
        outer = inner
    else:  # seqpsrr
        w_k = _cr_draw(rng, n_k, n_tk)
        w = np.concatenate([prefix, w_k])
        m = mahalanobis(cache, w)
        treated_idx = offset + np.flatnonzero(w_k == 1).astype(np.int64)
        control_idx = offset + np.flatnonzero(w_k == 0).astype(np.int64)
        cap = int(math.ceil(sched.cap_multiplier * sched.draws[k - 1] * n_tk * (n_k - n_tk)))
        w, m, inner, outer, forced, best_w, best_m = _psrr_chain(
            cache, w, m, a_k, session.gamma, rng, treated_idx, control_idx, cap
        )
        if forced:
            w, m = best_w, best_m

    trace = SampleTrace(
        assignment=w[offset:].astype(np.int8),
        final_m=m,
        inner_iters=inner,
        outer_iters=outer,
        wall_clock=time.perf_counter() - t0,
        threshold=a_k,
        forced_stop=forced,
    )
    updated = replace(
        session,
        k_done=k,
        covariates=x,
        assignment=w.astype(np.int8),
        m_history=session.m_history + (m,),
        draw_counters=session.draw_counters + (inner,),
    )
    return updated, trace


def run_groups(
    session: SeqSession, groups: list[np.ndarray]
) -> tuple[SeqSession, list[SampleTrace]]:
    """Feed the remaining groups to a session in order."""
    traces = []
    for x_k in groups:
        session, trace = seq_next_group(session, x_k)
        traces.append(trace)
    return session, traces


def replay_assignment(session: SeqSession, seed: int) -> tuple[np.ndarray, list[SampleTrace]]:
    """Re-run the completed design on its stored covariates with a fresh seed.

    This is the resampling primitive for randomization tests under a
    sequential design: same schedule, same group covariates, new streams.
    """
    if not session.complete:
        raise DimensionMismatch("can only replay a completed session")
    fresh = new_session(session.schedule, session.method, seed, session.gamma)
    traces = []
    for k in range(1, session.schedule.k_total + 1):
        fresh, trace = seq_next_group(fresh, session.group_covariates(k))
        traces.append(trace)
    return np.asarray(fresh.assignment, dtype=np.int8), traces


def session_to_dict(session: SeqSession) -> dict:
    cov = session.covariates
    return {
        "format_version": SESSION_FORMAT_VERSION,
        "method": session.method,
        "gamma": session.gamma,
        "schedule": {
            "group_sizes": list(session.schedule.group_sizes),
            "treated_sizes": list(session.schedule.treated_sizes),
            "draws": list(session.schedule.draws),
            "cap_multiplier": session.schedule.cap_multiplier,
        },
        "k_done": session.k_done,
        "covariates": {
            "rows": 0 if cov is None else int(cov.shape[0]),
            "cols": 0 if cov is None else int(cov.shape[1]),
            "data": [] if cov is None else [float(v) for v in cov.ravel()],
        },
        "assignment": [] if session.assignment is None else [int(v) for v in session.assignment],
        "m_history": [float(m) for m in session.m_history],
        "base_seed": session.base_seed,
        "draw_counters": list(session.draw_counters),
    }


def session_from_dict(doc: dict) -> SeqSession:
    try:
        version = doc["format_version"]
        if version != SESSION_FORMAT_VERSION:
            raise DimensionMismatch(f"unsupported session format_version {version}")
        schedule = Schedule(
            group_sizes=tuple(doc["schedule"]["group_sizes"]),
            treated_sizes=tuple(doc["schedule"]["treated_sizes"]),
            draws=tuple(doc["schedule"]["draws"]),
            cap_multiplier=int(doc["schedule"]["cap_multiplier"]),
        )
        rows = int(doc["covariates"]["rows"])
        cols = int(doc["covariates"]["cols"])
        cov = None
        if rows:
            cov = np.asarray(doc["covariates"]["data"], dtype=np.float64).reshape(rows, cols)
        assignment = None
        if doc["assignment"]:
            assignment = np.asarray(doc["assignment"], dtype=np.int8)
        return SeqSession(
            schedule=schedule,
            method=doc["method"],
            gamma=float(doc["gamma"]),
            base_seed=int(doc["base_seed"]),
            k_done=int(doc["k_done"]),
            covariates=cov,
            assignment=assignment,
            m_history=tuple(float(m) for m in doc["m_history"]),
            draw_counters=tuple(int(c) for c in doc["draw_counters"]),
        )
    except KeyError as exc:
        raise DimensionMismatch(f"session document missing field {exc}") from None


def save_session(session: SeqSession, path: str) -> None:
    """Write the session atomically (temp file + rename) so an interrupted
    write never corrupts a trial in progress."""
    doc = session_to_dict(session)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_session(path: str) -> SeqSession:
    with open(path, encoding="utf-8") as fh:
        return session_from_dict(json.load(fh))

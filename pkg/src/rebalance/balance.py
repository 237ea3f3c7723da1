"""Covariate data, the pooled covariance, and Mahalanobis imbalance.

The imbalance of an assignment ``w`` (0/1 vector with a fixed number of
treated units) is

    M(w) = n_t (1 - n_t/n) (xbar_t - xbar_c)' S^{-1} (xbar_t - xbar_c)

with ``S`` the pooled covariate covariance (n-1 denominator).  M can be
rewritten as a quadratic form ``(w - p_w 1)' H (w - p_w 1)`` with

    H = X S^{-1} X' / {n_t (1 - n_t/n)},    h = (2 n_t / n) H 1,

which is what makes pair switches cheap: switching treated unit ``i``
with control unit ``j`` changes M by an O(n) expression in rows i and j
of H.  ``build_cache`` materializes S^{-1}, H and h once; samplers then
evaluate millions of candidate switches without touching X again.

Covariates are used as given: columns are not rescaled here, because
M is invariant to invertible linear maps of the columns through S^{-1}.
Callers who want standardized columns must standardize before building
the cache.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidSwitch, SingularCovariance

# Chained incremental updates are re-anchored with a full recomputation
# this often; cheap insurance against float drift on very long chains.
RECOMPUTE_EVERY = 10_000

_PIVOT_RTOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CovariateMatrix:
    """Validated n-by-p real covariate matrix."""

    data: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.data, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionMismatch(f"covariate matrix must be 2-D, got ndim={x.ndim}")
        n, p = x.shape
        if n < 2 or p < 1:
            raise DimensionMismatch(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if n <= p:
            raise DimensionMismatch(
                f"need more units than covariates for an invertible covariance (n={n}, p={p})"
            )
        if not np.all(np.isfinite(x)):
            raise DimensionMismatch("covariate matrix contains non-finite entries")
        object.__setattr__(self, "data", _freeze(x))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Assignment:
    """Length-n 0/1 vector with exactly ``n_t`` ones."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w)
        if w.ndim != 1:
            raise DimensionMismatch("assignment must be a 1-D vector")
        if not np.all((w == 0) | (w == 1)):
            raise DimensionMismatch("assignment entries must be 0 or 1")
        object.__setattr__(self, "w", _freeze(w.astype(np.int8)))

    def __array__(self, dtype=None):
        return self.w.astype(dtype) if dtype is not None else self.w

    def __len__(self) -> int:
        return self.w.shape[0]

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def n_t(self) -> int:
        return int(self.w.sum())


@dataclass(frozen=True)
class BalanceCache:
    """Immutable quadratic-form cache for one covariate matrix and treated count.

    Safe to share across concurrent samplers: every field is a read-only
    array and all operations on it are pure.
    """

    x: np.ndarray
    n: int
    p: int
    n_t: int
    s_xx: np.ndarray
    s_xx_inv: np.ndarray
    h_mat: np.ndarray
    h_vec: np.ndarray
    col_sum: np.ndarray = field(repr=False)
    scale: float = field(repr=False, default=0.0)

    @property
    def n_c(self) -> int:
        return self.n - self.n_t


def build_cache(x, n_t: int, ridge: float = 0.0) -> BalanceCache:
    """Build the balance cache: S, S^{-1} (via Cholesky), H and h.

    ``ridge`` optionally adds ``ridge * I`` to S before factorization.
    It is off by default and never applied silently: a singular S raises
    SingularCovariance instead of being repaired, because regularization
    changes the acceptance region.
    """
    if not isinstance(x, CovariateMatrix):
        x = CovariateMatrix(np.asarray(x))
    n, p = x.n, x.p
    n_t = int(n_t)
    if not 0 < n_t < n:
        raise DimensionMismatch(f"need 0 < n_t < n, got n_t={n_t}, n={n}")
    if ridge < 0:
        raise DimensionMismatch("ridge must be >= 0")

    data = x.data
    centered = data - data.mean(axis=0)
    s_xx = centered.T @ centered / (n - 1)
    s_xx = (s_xx + s_xx.T) / 2.0
    if ridge > 0:
        s_xx = s_xx + ridge * np.eye(p)

    try:
        chol = np.linalg.cholesky(s_xx)
    except np.linalg.LinAlgError:
        raise SingularCovariance(
            "covariate covariance is not positive definite; remove collinear "
            "columns or pass a ridge term (ridge=eps adds eps*I)"
        ) from None
    pivots = np.diag(chol) ** 2
    if pivots.min() < _PIVOT_RTOL * np.diag(s_xx).max():
        raise SingularCovariance(
            "covariate covariance is numerically singular (pivot below "
            f"{_PIVOT_RTOL:g} * max diagonal); remove collinear columns or "
            "pass a ridge term (ridge=eps adds eps*I)"
        )
    chol_inv = np.linalg.solve(chol, np.eye(p))
    s_xx_inv = chol_inv.T @ chol_inv
    s_xx_inv = (s_xx_inv + s_xx_inv.T) / 2.0

    scale = n_t * (1.0 - n_t / n)
    h_mat = data @ s_xx_inv @ data.T / scale
    h_mat = (h_mat + h_mat.T) / 2.0
    h_vec = (2.0 * n_t / n) * (h_mat @ np.ones(n))

    return BalanceCache(
        x=data,
        n=n,
        p=p,
        n_t=n_t,
        s_xx=_freeze(s_xx),
        s_xx_inv=_freeze(s_xx_inv),
        h_mat=_freeze(h_mat),
        h_vec=_freeze(h_vec),
        col_sum=_freeze(data.sum(axis=0)),
        scale=scale,
    )


def _check_w(cache: BalanceCache, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (cache.n,):
        raise DimensionMismatch(
            f"assignment length {w.shape} does not match cache n={cache.n}"
        )
    ones = int(w.sum())
    if ones != cache.n_t:
        raise DimensionMismatch(
            f"assignment has {ones} treated units, cache expects n_t={cache.n_t}"
        )
    return w


def mahalanobis(cache: BalanceCache, w) -> float:
    """Full Mahalanobis imbalance of assignment ``w``, via the mean-difference form."""
    w = _check_w(cache, w)
    treated_sum = w @ cache.x
    diff = treated_sum / cache.n_t - (cache.col_sum - treated_sum) / cache.n_c
    return float(cache.scale * (diff @ cache.s_xx_inv @ diff))


def quadratic_form_m(cache: BalanceCache, w) -> float:
    """M(w) through the expansion w'Hw - w'h + p_w^2 1'H1.

    Algebraically identical to :func:`mahalanobis`; kept as a separate
    code path because it is the basis of the incremental update and the
    two must agree numerically.
    """
    w = _check_w(cache, w)
    p_w = cache.n_t / cache.n
    const = p_w * p_w * float(np.ones(cache.n) @ cache.h_mat @ np.ones(cache.n))
    return float(w @ cache.h_mat @ w - w @ cache.h_vec + const)


def mahalanobis_delta(cache: BalanceCache, w, m_current: float, i: int, j: int) -> float:
    """M of the assignment obtained from ``w`` by switching treated ``i`` with control ``j``.

    Costs O(n): two dot products against rows i and j of H.  ``m_current``
    must be M(w) for the update to be exact.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (cache.n,):
        raise DimensionMismatch(
            f"assignment length {w.shape} does not match cache n={cache.n}"
        )
    if not (0 <= i < cache.n and 0 <= j < cache.n):
        raise InvalidSwitch(f"switch indices ({i}, {j}) out of range for n={cache.n}")
    if w[i] != 1 or w[j] != 0:
        raise InvalidSwitch(f"need w[{i}]=1 and w[{j}]=0, got w[{i}]={w[i]}, w[{j}]={w[j]}")
    h = cache.h_mat
    g_i = float(h[i] @ w)
    g_j = float(h[j] @ w)
    return (
        m_current
        - (2.0 * g_i - h[i, i])
        + (2.0 * g_j - 2.0 * h[j, i] + h[j, j])
        + float(cache.h_vec[i] - cache.h_vec[j])
    )


def mahalanobis_delta_grid(
    cache: BalanceCache, w, m_current: float, treated: np.ndarray, controls: np.ndarray
) -> np.ndarray:
    """M after every (treated, control) switch, as a (len(treated), len(controls)) grid.

    One O(n^2) pass (H @ w) shared by all candidate switches; used by the
    greedy sampler which evaluates the full switch neighborhood per step.
    """
    w = np.asarray(w, dtype=np.float64)
    g = cache.h_mat @ w
    diag = np.diag(cache.h_mat)
    term_t = 2.0 * g[treated] - diag[treated]
    term_c = 2.0 * g[controls] + diag[controls]
    cross = cache.h_mat[np.ix_(treated, controls)]
    return (
        m_current
        - term_t[:, None]
        + term_c[None, :]
        - 2.0 * cross
        + cache.h_vec[treated][:, None]
        - cache.h_vec[controls][None, :]
    )

"""Randomness metrics, balance summaries and variance-reduction estimates.

The randomness metrics compare a design against complete randomization
through the pairwise same-group proportions p_r: for each unordered pair
of units, the fraction of sampled assignments placing both in the same
arm.  Under CR the common value is

    p_cre = [C(n_t, 2) + C(n_c, 2)] / C(n, 2).

The entropy metric is the mean binary entropy of the p_r normalized by
the entropy at p_cre (0 for a deterministic design, 1 under CR; natural
log, the ratio is base-invariant).  The dispersion metric normalizes the
standard deviation of p_r around p_cre by its value for a deterministic
design (n_t * n_c pairs pinned at 0, the rest at 1).  The eigenvalue
metric is the largest eigenvalue of the empirical covariance of the
+/-1-coded assignments; it is reported as observed, without the
idealized identity-covariance normalization that holds for CR only
asymptotically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EigFailure, EmptyInput, MissingBaseline


@dataclass
class RandomnessReport:
    e_n: float
    d_n: float
    l_n: float
    b_used: int
    pair_props: np.ndarray

    def to_dict(self) -> dict:
        return {"e_n": self.e_n, "d_n": self.d_n, "l_n": self.l_n, "b_used": self.b_used}


@dataclass
class BalanceReport:
    std_diffs: np.ndarray
    mahalanobis: float
    priv_per_covariate: np.ndarray | None = None
    priv_tau: float | None = None


def _sample_matrix(samples) -> np.ndarray:
    mat = np.asarray(samples)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise EmptyInput("need at least one assignment")
    if not np.all((mat == 0) | (mat == 1)):
        raise DimensionMismatch("assignments must be 0/1")
    counts = mat.sum(axis=1)
    if not np.all(counts == counts[0]):
        raise DimensionMismatch("all assignments must share the same treated count")
    return mat.astype(np.float64)


def pair_same_group_proportions(samples) -> np.ndarray:
    """p_r for every unordered unit pair, in row-major (i < j) order."""
    mat = _sample_matrix(samples)
    b, n = mat.shape
    same = mat.T @ mat + (1.0 - mat).T @ (1.0 - mat)
    iu = np.triu_indices(n, k=1)
    return same[iu] / b


def p_cre(n: int, n_t: int) -> float:
    """Same-group probability of a pair under complete randomization."""
    n_c = n - n_t
    return (math.comb(n_t, 2) + math.comb(n_c, 2)) / math.comb(n, 2)


def _entropy(p: np.ndarray | float) -> np.ndarray | float:
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    mask = (p > 0) & (p < 1)
    pm = p[mask]
    out[mask] = pm * np.log(pm) + (1.0 - pm) * np.log1p(-pm)
    return out


def entropy_metric(pair_props, n_t: int, n: int) -> float:
    """Normalized entropy of the pair proportions; 0 deterministic, 1 under CR."""
    props = np.asarray(pair_props, dtype=np.float64)
    ref = p_cre(n, n_t)
    denom = float(_entropy(np.array([ref]))[0])
    value = float(np.mean(_entropy(props))) / denom
    return min(max(value, 0.0), 1.0)


def sd_metric(pair_props, n_t: int, n: int) -> float:
    """Normalized dispersion of the pair proportions; 1 deterministic, ~0 under CR."""
    props = np.asarray(pair_props, dtype=np.float64)
    ref = p_cre(n, n_t)
    n_pairs = math.comb(n, 2)
    n_split = n_t * (n - n_t)
    denom = math.sqrt((n_split * ref**2 + (n_pairs - n_split) * (1.0 - ref) ** 2) / n_pairs)
    value = math.sqrt(float(np.mean((props - ref) ** 2))) / denom
    return min(max(value, 0.0), 1.0)


def largest_eigenvalue(matrix, tol: float = 1e-8, max_iters: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic all-ones start; converges on the eigenvalue change.  If
    the iteration stagnates (all-ones start can sit nearly orthogonal to
    the top eigenvector), it restarts once from a shifted matrix and a
    graded start vector, which breaks the orthogonality.
    """
    a = np.asarray(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionMismatch("matrix must be square")
    norm = float(np.abs(a).max())
    if norm == 0.0:
        return 0.0

    def _iterate(mat: np.ndarray, v: np.ndarray, budget: int, shift: float) -> float | None:
        lam = math.inf
        for _ in range(budget):
            u = mat @ v
            nu = float(np.linalg.norm(u))
            if nu == 0.0:
                return None
            v = u / nu
            lam_new = float(v @ (mat @ v))
            if abs(lam_new - lam) < tol:
                return lam_new - shift
            lam = lam_new
        return None

    ones = np.ones(n) / math.sqrt(n)
    result = _iterate(a, ones, max_iters // 2, 0.0)
    if result is not None:
        return result
    # Stagnation: restart with a shift (keeps eigenvectors, improves the
    # gap against negative tail eigenvalues) and a non-uniform start.
    shift = norm
    graded = np.arange(1, n + 1, dtype=np.float64)
    graded /= np.linalg.norm(graded)
    result = _iterate(a + shift * np.eye(n), graded, max_iters - max_iters // 2, shift)
    if result is None:
        raise EigFailure(f"power iteration did not converge in {max_iters} iterations")
    return result


def max_eig_metric(samples) -> float:
    """Largest eigenvalue of the covariance of the +/-1-coded assignments."""
    mat = _sample_matrix(samples)
    if mat.shape[0] < 2:
        raise EmptyInput("need at least two assignments for a covariance")
    coded = 2.0 * mat - 1.0
    cov = np.cov(coded, rowvar=False, ddof=1)
    return largest_eigenvalue(np.atleast_2d(cov))


def randomness_report(samples, n_t: int | None = None) -> RandomnessReport:
    mat = _sample_matrix(samples)
    b, n = mat.shape
    if n_t is None:
        n_t = int(mat[0].sum())
    props = pair_same_group_proportions(mat)
    return RandomnessReport(
        e_n=entropy_metric(props, n_t, n),
        d_n=sd_metric(props, n_t, n),
        l_n=max_eig_metric(mat),
        b_used=b,
        pair_props=props,
    )


def priv(values_by_method: dict, baseline: str = "cr") -> dict:
    """Percent reduction in variance relative to the baseline method.

    Values may be 1-D (estimates) or 2-D (replicates by quantity, e.g.
    per-covariate mean differences); the reduction is per column.
    """
    if baseline not in values_by_method:
        raise MissingBaseline(f"baseline method {baseline!r} not present")
    arrays = {}
    for name, values in values_by_method.items():
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape[0] < 2:
            raise EmptyInput(f"method {name!r} needs at least two values")
        arrays[name] = arr
    var_base = np.var(arrays[baseline], axis=0, ddof=1)
    out = {}
    for name, arr in arrays.items():
        ratio = np.var(arr, axis=0, ddof=1) / var_base
        out[name] = 100.0 * (1.0 - ratio)
    return out


def standardized_differences(x, w) -> np.ndarray:
    """Per-covariate standardized mean difference between arms.

    Continuous columns use (xbar_t - xbar_c) / sqrt((s_t^2 + s_c^2) / 2)
    with sample variances; 0/1 columns use the proportion-based
    denominator sqrt((p_t(1-p_t) + p_c(1-p_c)) / 2).  A zero denominator
    yields NaN (undefined), never a silent 0.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w)
    if x.ndim != 2 or w.shape != (x.shape[0],):
        raise DimensionMismatch("x must be n-by-p and w length n")
    treated = x[w == 1]
    control = x[w == 0]
    if treated.shape[0] < 2 or control.shape[0] < 2:
        raise DimensionMismatch("both arms need at least two units")
    out = np.empty(x.shape[1])
    for j in range(x.shape[1]):
        col = x[:, j]
        mean_diff = treated[:, j].mean() - control[:, j].mean()
        if np.all((col == 0) | (col == 1)):
            pt = treated[:, j].mean()
            pc = control[:, j].mean()
            denom = math.sqrt((pt * (1 - pt) + pc * (1 - pc)) / 2.0)
        else:
            denom = math.sqrt(
                (treated[:, j].var(ddof=1) + control[:, j].var(ddof=1)) / 2.0
            )
        out[j] = mean_diff / denom if denom > 0 else math.nan
    return out


def balance_report(x, w, cache=None) -> BalanceReport:
    from .balance import build_cache, mahalanobis

    w = np.asarray(w)
    if cache is None:
        cache = build_cache(x, int(w.sum()))
    return BalanceReport(
        std_diffs=standardized_differences(x, w),
        mahalanobis=mahalanobis(cache, w),
    )

"""Central and noncentral chi-square CDF and quantile.

Only the two functions the samplers need.  The central CDF goes through
the regularized lower incomplete gamma function P(s, x) (power series
for x < s+1, Lentz continued fraction otherwise).  The noncentral CDF is
the Poisson mixture

    F(x; k, lam) = sum_j  e^{-lam/2} (lam/2)^j / j! * F_central(x; k + 2j)

summed outward from the modal index floor(lam/2) to avoid underflow,
and truncated once the remaining Poisson mass drops below ``tail_tol``
(the neglected terms contribute at most that mass, since each central
CDF factor is <= 1).  Quantiles invert the CDF by plain bisection.
"""

from __future__ import annotations

import math
from functools import lru_cache

from .errors import DomainError

_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 10_000
DEFAULT_TAIL_TOL = 1e-12
_QUANTILE_WIDTH = 1e-10


def _gammainc_lower_series(s: float, x: float) -> float:
    # P(s, x) = x^s e^-x / Gamma(s+1) * sum_k x^k / ((s+1)...(s+k)), for x < s+1.
    term = 1.0 / s
    total = term
    a = s
    for _ in range(_GAMMA_MAX_ITER):
        a += 1.0
        term *= x / a
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    log_prefix = s * math.log(x) - x - math.lgamma(s)
    return math.exp(log_prefix) * total


def _gammainc_upper_cf(s: float, x: float) -> float:
    # Q(s, x) via the modified Lentz continued fraction, for x >= s+1.
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    f = d
    for i in range(1, _GAMMA_MAX_ITER + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        f *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    log_prefix = s * math.log(x) - x - math.lgamma(s)
    return math.exp(log_prefix) * f


def _gammainc_lower(s: float, x: float) -> float:
    """Regularized lower incomplete gamma P(s, x) for s > 0, x >= 0."""
    if x <= 0.0:
        return 0.0
    if x < s + 1.0:
        return min(_gammainc_lower_series(s, x), 1.0)
    return max(1.0 - _gammainc_upper_cf(s, x), 0.0)


def _poisson_weight(j: int, half_lambda: float) -> float:
    return math.exp(-half_lambda + j * math.log(half_lambda) - math.lgamma(j + 1))


def chi2_cdf(x: float, dof: int, noncentrality: float = 0.0,
             tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """CDF of the (non)central chi-square distribution at ``x``."""
    dof = int(dof)
    if dof < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {dof}")
    if not math.isfinite(x) and x > 0:
        return 1.0
    if x < 0 or not math.isfinite(x):
        raise DomainError(f"chi-square CDF argument must be >= 0, got {x}")
    if noncentrality < 0 or not math.isfinite(noncentrality):
        raise DomainError(f"noncentrality must be >= 0, got {noncentrality}")
    if x == 0.0:
        return 0.0
    if noncentrality == 0.0:
        return _gammainc_lower(dof / 2.0, x / 2.0)

    half_lambda = noncentrality / 2.0
    half_x = x / 2.0
    s = dof / 2.0
    j_mode = int(half_lambda)
    w_mode = _poisson_weight(j_mode, half_lambda)

    # One incomplete-gamma evaluation anchors the walk; neighbouring
    # mixture terms follow from P(a+1, x) = P(a, x) - x^a e^-x / Gamma(a+1),
    # so each extra term costs O(1) instead of a fresh gamma loop.
    p_mode = _gammainc_lower(s + j_mode, half_x)
    t_mode = math.exp((s + j_mode) * math.log(half_x) - half_x - math.lgamma(s + j_mode + 1))

    total = w_mode * p_mode
    mass = w_mode

    w_up, j_up, p_up, t_up = w_mode, j_mode, p_mode, t_mode
    w_down, j_down, p_down, t_down = w_mode, j_mode, p_mode, t_mode
    while 1.0 - mass > tail_tol:
        advanced = False
        if w_up > 0.0:
            p_up = max(p_up - t_up, 0.0)
            t_up *= half_x / (s + j_up + 1)
            w_up *= half_lambda / (j_up + 1)
            j_up += 1
            if w_up > 0.0:
                total += w_up * p_up
                mass += w_up
                advanced = True
        if j_down > 0:
            t_down *= (s + j_down) / half_x
            p_down = min(p_down + t_down, 1.0)
            w_down *= j_down / half_lambda
            j_down -= 1
            total += w_down * p_down
            mass += w_down
            advanced = True
        if not advanced:
            break
    return min(max(total, 0.0), 1.0)


@lru_cache(maxsize=4096)
def chi2_quantile(prob: float, dof: int, noncentrality: float = 0.0,
                  tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """Quantile (inverse CDF) of the (non)central chi-square distribution.

    Bisection down to an absolute bracket width of 1e-10, starting from
    the bracket [0, dof + lam + 40 sqrt(2 dof + 4 lam) + 40] which covers
    all probabilities representable at double precision.  Results are
    memoized (the function is pure and repeated thresholds are common in
    sequential schedules).
    """
    dof = int(dof)
    if dof < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {dof}")
    if not 0.0 < prob < 1.0:
        raise DomainError(f"quantile probability must be in (0, 1), got {prob}")
    if noncentrality < 0 or not math.isfinite(noncentrality):
        raise DomainError(f"noncentrality must be >= 0, got {noncentrality}")

    lo = 0.0
    hi = dof + noncentrality + 40.0 * math.sqrt(2.0 * dof + 4.0 * noncentrality) + 40.0
    while chi2_cdf(hi, dof, noncentrality, tail_tol) < prob:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError(f"quantile bracket expansion failed for prob={prob}")
    while hi - lo > _QUANTILE_WIDTH:
        mid = (lo + hi) / 2.0
        if chi2_cdf(mid, dof, noncentrality, tail_tol) < prob:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0

import itertools

import numpy as np
import pytest

from rebalance import build_cache, mahalanobis, stream


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def all_assignments(n, n_t):
    """Every fixed-margin assignment as an (N, n) int matrix."""
    rows = []
    for idx in itertools.combinations(range(n), n_t):
        w = np.zeros(n, dtype=np.int8)
        w[list(idx)] = 1
        rows.append(w)
    return np.stack(rows)


def linear_population(n, p, r_squared, effect_multiplier, seed):
    """Standard-normal covariates, outcomes linear in the row sums.

    Same construction the bench harness uses, rebuilt here so tests do
    not depend on the harness they are checking.
    """
    gen = stream(seed, 999)
    x = gen.standard_normal((n, p))
    sigma2 = p * (1.0 - r_squared) / r_squared
    y0 = x.sum(axis=1) + gen.normal(0.0, np.sqrt(sigma2), n)
    tau = effect_multiplier * float(np.std(y0, ddof=1))
    return x, y0, y0 + tau, tau


def enumerated_m_values(x, n_t):
    cache = build_cache(x, n_t)
    w_all = all_assignments(x.shape[0], n_t)
    return w_all, np.array([mahalanobis(cache, w) for w in w_all])

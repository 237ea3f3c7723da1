import numpy as np
import pytest

from rebalance import (
    CovariateMatrix,
    DimensionMismatch,
    InvalidSwitch,
    SingularCovariance,
    build_cache,
    mahalanobis,
    mahalanobis_delta,
    stream,
)
from rebalance.balance import mahalanobis_delta_grid, quadratic_form_m


def random_assignment(gen, n, n_t):
    w = np.zeros(n)
    w[gen.permutation(n)[:n_t]] = 1.0
    return w


class TestCovariateMatrix:
    def test_rejects_too_few_units(self):
        with pytest.raises(DimensionMismatch):
            CovariateMatrix(np.ones((1, 1)))

    def test_rejects_wide_matrix(self):
        with pytest.raises(DimensionMismatch):
            CovariateMatrix(np.random.default_rng(0).normal(size=(5, 5)))

    def test_rejects_nonfinite(self):
        x = np.ones((4, 1))
        x[2, 0] = np.nan
        with pytest.raises(DimensionMismatch):
            CovariateMatrix(x)


class TestBuildCache:
    def test_single_column_covariance(self):
        # var of (-1, -1, 1, 1) with the n-1 denominator is 4/3
        cache = build_cache(np.array([[-1.0], [-1.0], [1.0], [1.0]]), 2)
        assert cache.s_xx.shape == (1, 1)
        assert cache.s_xx[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-15)

    def test_identical_columns_raise(self):
        gen = np.random.default_rng(3)
        col = gen.normal(size=(20, 1))
        with pytest.raises(SingularCovariance):
            build_cache(np.hstack([col, col]), 10)

    def test_ridge_repair_is_explicit(self):
        gen = np.random.default_rng(3)
        col = gen.normal(size=(20, 1))
        x = np.hstack([col, col])
        cache = build_cache(x, 10, ridge=1e-6)
        assert np.isfinite(cache.s_xx_inv).all()

    def test_inverse_and_h_identities(self, rng):
        x = rng.normal(size=(30, 10))
        cache = build_cache(x, 12)
        ident = cache.s_xx @ cache.s_xx_inv
        assert np.abs(ident - np.eye(10)).max() < 1e-8
        assert np.abs(cache.h_mat - cache.h_mat.T).max() < 1e-10
        expected_h = (2 * 12 / 30) * cache.h_mat @ np.ones(30)
        assert np.abs(cache.h_vec - expected_h).max() < 1e-10

    def test_cache_is_immutable(self, rng):
        cache = build_cache(rng.normal(size=(10, 2)), 5)
        with pytest.raises(ValueError):
            cache.h_mat[0, 0] = 1.0

    def test_bad_treated_count(self, rng):
        x = rng.normal(size=(10, 2))
        with pytest.raises(DimensionMismatch):
            build_cache(x, 0)
        with pytest.raises(DimensionMismatch):
            build_cache(x, 10)


class TestMahalanobis:
    def test_hand_computed_value(self):
        # p=1, x=(-1,1,-1,1), w=(0,1,0,1): mean diff 2, var 4/3,
        # M = 2 * (1 - 1/2) * 4 / (4/3) = 3
        cache = build_cache(np.array([[-1.0], [1.0], [-1.0], [1.0]]), 2)
        assert mahalanobis(cache, [0, 1, 0, 1]) == pytest.approx(3.0, abs=1e-12)

    def test_complement_symmetry_exact(self, rng):
        x = rng.normal(size=(20, 5))
        cache = build_cache(x, 10)
        for _ in range(50):
            w = random_assignment(rng, 20, 10)
            assert abs(mahalanobis(cache, w) - mahalanobis(cache, 1 - w)) < 1e-10

    def test_nonnegative(self, rng):
        x = rng.normal(size=(25, 4))
        cache = build_cache(x, 8)
        for _ in range(200):
            assert mahalanobis(cache, random_assignment(rng, 25, 8)) >= -1e-10

    def test_quadratic_form_identity(self, rng):
        x = rng.normal(size=(30, 10))
        cache = build_cache(x, 15)
        for _ in range(50):
            w = random_assignment(rng, 30, 15)
            assert abs(mahalanobis(cache, w) - quadratic_form_m(cache, w)) < 1e-8

    def test_dimension_checks(self, rng):
        cache = build_cache(rng.normal(size=(10, 2)), 5)
        with pytest.raises(DimensionMismatch):
            mahalanobis(cache, np.ones(11))
        with pytest.raises(DimensionMismatch):
            mahalanobis(cache, np.r_[np.ones(4), np.zeros(6)])  # wrong n_t


class TestMahalanobisDelta:
    def test_switch_and_switch_back(self, rng):
        x = rng.normal(size=(20, 5))
        cache = build_cache(x, 10)
        w = random_assignment(rng, 20, 10)
        m = mahalanobis(cache, w)
        i = int(np.flatnonzero(w == 1)[0])
        j = int(np.flatnonzero(w == 0)[0])
        m_star = mahalanobis_delta(cache, w, m, i, j)
        w_star = w.copy()
        w_star[i], w_star[j] = 0.0, 1.0
        m_back = mahalanobis_delta(cache, w_star, m_star, j, i)
        assert abs(m_back - m) < 1e-9

    def test_matches_full_recomputation(self):
        gen = stream(42)
        x = gen.normal(size=(50, 10))
        cache = build_cache(x, 25)
        for _ in range(200):
            w = random_assignment(gen, 50, 25)
            m = mahalanobis(cache, w)
            i = int(gen.choice(np.flatnonzero(w == 1)))
            j = int(gen.choice(np.flatnonzero(w == 0)))
            m_star = mahalanobis_delta(cache, w, m, i, j)
            w_star = w.copy()
            w_star[i], w_star[j] = 0.0, 1.0
            assert abs(m_star - mahalanobis(cache, w_star)) < 1e-8

    def test_hand_computed_switch_to_balance(self):
        # switching the treated unit at index 1 with the control at index 0
        # equalizes the group means, so M drops to 0
        cache = build_cache(np.array([[-1.0], [1.0], [-1.0], [1.0]]), 2)
        w = np.array([0.0, 1.0, 0.0, 1.0])
        m = mahalanobis(cache, w)
        assert mahalanobis_delta(cache, w, m, 1, 0) == pytest.approx(0.0, abs=1e-12)

    def test_invalid_switch(self, rng):
        cache = build_cache(rng.normal(size=(10, 2)), 5)
        w = np.r_[np.ones(5), np.zeros(5)]
        with pytest.raises(InvalidSwitch):
            mahalanobis_delta(cache, w, mahalanobis(cache, w), 7, 8)  # w[7] = 0
        with pytest.raises(InvalidSwitch):
            mahalanobis_delta(cache, w, mahalanobis(cache, w), 0, 12)

    def test_grid_matches_single_deltas(self, rng):
        x = rng.normal(size=(16, 3))
        cache = build_cache(x, 6)
        w = random_assignment(rng, 16, 6)
        m = mahalanobis(cache, w)
        treated = np.flatnonzero(w == 1)
        controls = np.flatnonzero(w == 0)
        grid = mahalanobis_delta_grid(cache, w, m, treated, controls)
        for a, i in enumerate(treated):
            for b, j in enumerate(controls):
                single = mahalanobis_delta(cache, w, m, int(i), int(j))
                assert abs(grid[a, b] - single) < 1e-10


def test_reserpine_fixture_if_supplied():
    """Optional check against the real trial data (not redistributable).

    Supply a CSV at tests/fixtures/reserpine.csv with a header row, the
    eight baseline covariate columns, and a final 0/1 column named "w"
    (30 rows, 20 treated); the observed imbalance is then checked.
    """
    import os

    path = os.path.join(os.path.dirname(__file__), "fixtures", "reserpine.csv")
    if not os.path.exists(path):
        pytest.skip("reserpine fixture not supplied")
    from rebalance.tabular import read_table

    headers, data = read_table(path)
    w = data[:, headers.index("w")]
    x = np.delete(data, headers.index("w"), axis=1)
    cache = build_cache(x, int(w.sum()))
    assert mahalanobis(cache, w) == pytest.approx(10.95, abs=0.01)

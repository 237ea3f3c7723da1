import math

import numpy as np
import pytest

from rebalance import (
    DesignSpec,
    EmptyInput,
    MissingBaseline,
    build_cache,
    entropy_metric,
    max_eig_metric,
    pair_same_group_proportions,
    priv,
    randomness_report,
    sample_many,
    sd_metric,
    standardized_differences,
    stream,
    threshold_from_pa,
)
from rebalance.diagnostics import balance_report, largest_eigenvalue, p_cre

from conftest import linear_population


def cr_samples(n, n_t, b, seed):
    gen = stream(seed)
    out = np.zeros((b, n), dtype=np.int8)
    for i in range(b):
        out[i, gen.permutation(n)[:n_t]] = 1
    return out


class TestPairProportions:
    def test_single_assignment_is_binary(self):
        props = pair_same_group_proportions(np.array([[1, 1, 0, 0]]))
        assert set(np.unique(props)) <= {0.0, 1.0}
        assert props.shape == (6,)

    def test_cr_mean_matches_p_cre(self):
        samples = cr_samples(10, 5, 4000, seed=41)
        props = pair_same_group_proportions(samples)
        # every fixed-margin assignment has the same same-group pair
        # count, so the mean over pairs is p_cre exactly, at any B
        assert props.mean() == pytest.approx(p_cre(10, 5), abs=1e-12)

    def test_p_cre_matches_factorial_expression(self):
        for n, n_t in ((5, 2), (6, 2), (7, 3)):
            n_c = n - n_t
            direct = 1.0 - (
                math.factorial(n - 2)
                // (math.factorial(n_t - 1) * math.factorial(n - n_t - 1))
                * 2
            ) / (math.factorial(n) // (math.factorial(n_t) * math.factorial(n_c)))
            assert p_cre(n, n_t) == pytest.approx(direct, abs=1e-12)

    def test_equal_arms_closed_form(self):
        assert p_cre(30, 15) == pytest.approx((30 - 2) / (2 * (30 - 1)), abs=1e-15)

    def test_rms_deviation_shrinks_like_root_b(self):
        small = pair_same_group_proportions(cr_samples(12, 6, 100, seed=42))
        big = pair_same_group_proportions(cr_samples(12, 6, 10_000, seed=43))
        ref = p_cre(12, 6)
        rms_small = np.sqrt(np.mean((small - ref) ** 2))
        rms_big = np.sqrt(np.mean((big - ref) ** 2))
        assert 5 <= rms_small / rms_big <= 20  # theoretical factor 10

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            pair_same_group_proportions(np.zeros((0, 4)))


class TestEntropyAndDispersion:
    def test_deterministic_design_limits(self):
        samples = np.tile([1, 0, 1, 0, 1, 0], (50, 1))
        props = pair_same_group_proportions(samples)
        assert entropy_metric(props, 3, 6) == 0.0
        assert sd_metric(props, 3, 6) == 1.0

    def test_cr_limits(self):
        samples = cr_samples(16, 8, 5000, seed=44)
        props = pair_same_group_proportions(samples)
        assert entropy_metric(props, 8, 16) > 0.97
        assert sd_metric(props, 8, 16) < 0.10

    def test_bounds_hold_everywhere(self, rng):
        for _ in range(20):
            props = rng.uniform(0, 1, size=15)
            e = entropy_metric(props, 3, 6)
            d = sd_metric(props, 3, 6)
            assert 0.0 <= e <= 1.0
            assert 0.0 <= d <= 1.0


class TestLargestEigenvalue:
    def test_hand_built_two_by_two(self):
        assert largest_eigenvalue(np.array([[1.0, 0.5], [0.5, 1.0]])) == pytest.approx(
            1.5, abs=1e-8
        )

    def test_zero_matrix(self):
        assert largest_eigenvalue(np.zeros((4, 4))) == 0.0

    def test_matches_dense_eigensolver(self, rng):
        for n in (5, 20, 50):
            a = rng.normal(size=(n, 2 * n))
            cov = a @ a.T / (2 * n)
            expected = float(np.linalg.eigvalsh(cov)[-1])
            assert largest_eigenvalue(cov) == pytest.approx(expected, abs=1e-6)

    def test_identical_samples_give_zero(self):
        samples = np.tile([1, 0, 1, 0], (30, 1))
        assert max_eig_metric(samples) == 0.0

    def test_ones_start_orthogonal_to_top_eigenvector(self):
        # top eigenvector (1, -1)/sqrt(2) is orthogonal to the all-ones
        # start; the shifted restart must still find 3.0
        mat = np.array([[2.0, -1.0], [-1.0, 2.0]])
        assert largest_eigenvalue(mat) == pytest.approx(3.0, abs=1e-7)


class TestPriv:
    def test_identical_to_baseline_is_zero(self, rng):
        vals = rng.normal(size=200)
        out = priv({"cr": vals, "psrr": vals.copy()})
        assert out["psrr"] == pytest.approx(0.0, abs=1e-12)

    def test_missing_baseline(self):
        with pytest.raises(MissingBaseline):
            priv({"psrr": np.ones(10)})

    def test_covariate_priv_near_theory_on_unequal_arms(self):
        # 30 units, 20 treated, 8 covariates: the classic unequal-arm
        # configuration; per-covariate reduction approaches 1 - a/p
        gen = stream(45)
        x = gen.standard_normal((30, 8))
        cache = build_cache(x, 20)
        a = threshold_from_pa(8, 0.001)
        diffs = {}
        for method in ("cr", "psrr"):
            spec = DesignSpec(
                method=method, n_t=20,
                acceptance_prob=0.001 if method == "psrr" else None,
            )
            rows = []
            for tr in sample_many(cache, spec, 3000, seed=46):
                w = tr.assignment.astype(bool)
                rows.append(x[w].mean(axis=0) - x[~w].mean(axis=0))
            diffs[method] = np.asarray(rows)
        out = priv(diffs)
        assert out["psrr"].shape == (8,)
        assert out["psrr"].mean() == pytest.approx(100 * (1 - a / 8), abs=6.0)

    def test_too_few_values(self):
        with pytest.raises(EmptyInput):
            priv({"cr": [1.0]})


class TestStandardizedDifferences:
    def test_identical_group_means(self):
        x = np.array([[1.0], [1.0], [2.0], [2.0]])
        w = np.array([1, 0, 1, 0])
        assert standardized_differences(x, w)[0] == 0.0

    def test_two_point_hand_instance(self):
        x = np.array([[0.0], [2.0], [0.0], [2.0]])
        w = np.array([1, 1, 0, 0])
        assert standardized_differences(x, w)[0] == 0.0

    def test_binary_column_uses_proportions(self):
        x = np.array([[1.0], [1.0], [0.0], [1.0], [0.0], [0.0]])
        w = np.array([1, 1, 1, 0, 0, 0])
        pt, pc = 2 / 3, 1 / 3
        expected = (pt - pc) / math.sqrt((pt * (1 - pt) + pc * (1 - pc)) / 2)
        assert standardized_differences(x, w)[0] == pytest.approx(expected, abs=1e-12)

    def test_zero_variance_is_nan_not_zero(self):
        x = np.column_stack([np.ones(6), np.arange(6.0)])
        w = np.array([1, 1, 1, 0, 0, 0])
        out = standardized_differences(x, w)
        assert math.isnan(out[0])
        assert np.isfinite(out[1])

    def test_reserpine_weight_column_if_supplied(self):
        import os

        path = os.path.join(os.path.dirname(__file__), "fixtures", "reserpine.csv")
        if not os.path.exists(path):
            pytest.skip("reserpine fixture not supplied")
        from rebalance.tabular import read_table

        headers, data = read_table(path)
        w = data[:, headers.index("w")]
        x = np.delete(data, headers.index("w"), axis=1)
        names = [h for h in headers if h != "w"]
        out = standardized_differences(x, w)
        assert out[names.index("weight")] == pytest.approx(-0.83, abs=0.01)


class TestReports:
    def test_randomness_report_fields(self):
        samples = cr_samples(12, 6, 500, seed=47)
        rep = randomness_report(samples)
        assert rep.b_used == 500
        assert 0 <= rep.e_n <= 1 and 0 <= rep.d_n <= 1
        assert rep.l_n >= 0
        assert rep.pair_props.shape == (66,)

    def test_balance_report(self, rng):
        x = rng.normal(size=(20, 3))
        w = np.r_[np.ones(10), np.zeros(10)].astype(int)
        rep = balance_report(x, w)
        assert rep.mahalanobis >= 0
        assert rep.std_diffs.shape == (3,)

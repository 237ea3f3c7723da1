import math

import numpy as np
import pytest
import scipy.stats

from rebalance import DomainError, chi2_cdf, chi2_quantile


def normal_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


class TestCentralCdf:
    def test_zero_and_monotone(self):
        assert chi2_cdf(0.0, 5) == 0.0
        grid = np.linspace(0.0, 40.0, 200)
        vals = [chi2_cdf(x, 5) for x in grid]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_reported_threshold_probability(self):
        # the 0.001 quantile of chi2_8 rounds to 0.86
        assert chi2_cdf(0.857, 8) == pytest.approx(0.001, abs=2e-5)

    def test_one_dof_normal_identity(self):
        for x in (0.5, 1.0, 4.0):
            expected = 2.0 * normal_cdf(math.sqrt(x)) - 1.0
            assert abs(chi2_cdf(x, 1) - expected) < 1e-9

    def test_even_dof_closed_form(self):
        # dof=4: F(x) = 1 - exp(-x/2) (1 + x/2)
        for x in (0.3, 2.0, 7.5, 20.0):
            expected = 1.0 - math.exp(-x / 2.0) * (1.0 + x / 2.0)
            assert abs(chi2_cdf(x, 4) - expected) < 1e-12

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            chi2_cdf(-1.0, 3)
        with pytest.raises(DomainError):
            chi2_cdf(1.0, 3, noncentrality=-0.5)
        with pytest.raises(DomainError):
            chi2_cdf(1.0, 0)


class TestNoncentralCdf:
    def test_against_scipy(self):
        for dof in (1, 3, 8, 10):
            for lam in (0.5, 2.0, 11.7, 40.0):
                for x in (0.1, 1.0, float(dof), float(dof + lam), 3.0 * (dof + lam)):
                    expected = scipy.stats.ncx2.cdf(x, dof, lam)
                    assert abs(chi2_cdf(x, dof, lam) - expected) < 1e-10

    def test_lambda_shifts_mass_right(self):
        for x in (1.0, 5.0, 12.0):
            vals = [chi2_cdf(x, 6, lam) for lam in (0.0, 1.0, 4.0, 16.0)]
            assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))

    def test_truncation_tolerance(self):
        for lam in (3.0, 25.0, 80.0):
            base = chi2_cdf(9.0, 7, lam, tail_tol=1e-12)
            doubled = chi2_cdf(9.0, 7, lam, tail_tol=2e-12)
            halved = chi2_cdf(9.0, 7, lam, tail_tol=5e-13)
            assert abs(base - doubled) < 1e-9
            assert abs(base - halved) < 1e-9


class TestQuantile:
    def test_round_trip(self):
        gen = np.random.default_rng(7)
        for _ in range(25):
            x = float(gen.uniform(0.05, 30.0))
            dof = int(gen.integers(1, 12))
            assert abs(chi2_quantile(chi2_cdf(x, dof), dof) - x) < 1e-7

    def test_paper_threshold(self):
        assert 0.855 <= chi2_quantile(0.001, 8) <= 0.860

    def test_two_dof_median(self):
        assert abs(chi2_quantile(0.5, 2) - 2.0 * math.log(2.0)) < 1e-8

    def test_noncentral_against_scipy(self):
        for prob in (0.01, 0.2, 0.5, 0.9):
            for dof, lam in ((4, 2.0), (10, 11.0), (5, 33.0)):
                expected = scipy.stats.ncx2.ppf(prob, dof, lam)
                assert abs(chi2_quantile(prob, dof, lam) - expected) < 1e-7

    def test_extreme_probabilities_bracket(self):
        hi = chi2_quantile(1.0 - 1e-12, 10, 5.0)
        assert chi2_cdf(hi, 10, 5.0) >= 1.0 - 1e-11
        lo = chi2_quantile(1e-12, 10, 5.0)
        assert lo >= 0.0

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            chi2_quantile(0.0, 4)
        with pytest.raises(DomainError):
            chi2_quantile(1.0, 4)
        with pytest.raises(DomainError):
            chi2_quantile(0.5, 4, noncentrality=-1.0)

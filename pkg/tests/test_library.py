import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bsindy.derivatives import build_operators, make_stencil
from bsindy.dynamics import TimeSeries, add_noise, cubic_osc, simulate
from bsindy.library import (TermDescriptor, build_library, evaluate_terms, gaussian_power_moment,
                            parse_label, polynomial_terms, power_variance, product_variance,
                            skewness_check, variance_terms)

finite = st.floats(-3, 3, allow_nan=False)
scale = st.floats(0, 2, allow_nan=False)


class TestMoments:
    @given(finite, scale)
    def test_low_orders(self, mu, s):
        assert gaussian_power_moment(mu, s, 0) == 1.0
        assert gaussian_power_moment(mu, s, 1) == pytest.approx(mu)
        assert gaussian_power_moment(mu, s, 2) == pytest.approx(mu**2 + s**2)
        assert gaussian_power_moment(mu, s, 3) == pytest.approx(mu**3 + 3 * mu * s**2, abs=1e-12)
        assert gaussian_power_moment(mu, s, 4) == pytest.approx(
            mu**4 + 6 * mu**2 * s**2 + 3 * s**4, abs=1e-12)

    @given(finite, scale)
    def test_power_variance_closed_forms(self, mu, s):
        assert power_variance(mu, s, 1) == pytest.approx(s**2, abs=1e-12)
        assert power_variance(mu, s, 2) == pytest.approx(4 * mu**2 * s**2 + 2 * s**4, abs=1e-9)

    @given(finite, scale, st.integers(1, 6))
    def test_variance_non_negative(self, mu, s, n):
        assert power_variance(mu, s, n) >= 0

    def test_formula_matches_taylor_series(self):
        # sum_i (sigma^i / i!) (n! / (n-i)!) mu^(n-i) a_i with a_i = (i-1)!! for even i
        mu, s, n = 0.7, 0.3, 6
        total = sum(s**i / math.factorial(i) * math.factorial(n) / math.factorial(n - i)
                    * mu ** (n - i) * math.prod(range(1, i, 2)) for i in range(0, n + 1, 2))
        assert gaussian_power_moment(mu, s, n) == pytest.approx(total, rel=1e-14)

    def test_monte_carlo_sixth_moment(self):
        x = 0.7 + 0.3 * np.random.default_rng(0).standard_normal(10_000_000)
        x6 = x**6
        se = x6.std() / np.sqrt(x6.size)
        assert abs(x6.mean() - gaussian_power_moment(0.7, 0.3, 6)) < 3 * se

    def test_monte_carlo_cube_variance(self):
        x = 1.0 + 0.1 * np.random.default_rng(1).standard_normal(2_000_000)
        assert np.var(x**3) == pytest.approx(power_variance(1.0, 0.1, 3), rel=5e-3)

    def test_broadcast(self):
        out = gaussian_power_moment(np.array([0.0, 1.0]), 0.5, 2)
        assert np.allclose(out, [0.25, 1.25])

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            gaussian_power_moment(0.0, -1.0, 2)


class TestProductVariance:
    @given(finite, finite, scale)
    def test_deterministic_factor(self, c, mu, s):
        other = (gaussian_power_moment(mu, s, 1), gaussian_power_moment(mu, s, 2))
        got = product_variance((c, c * c), other)
        assert got == pytest.approx(c * c * power_variance(mu, s, 1), abs=1e-9)

    def test_zero_means(self):
        m1 = (0.0, 0.04)
        m2 = (0.0, 0.09)
        assert product_variance(m1, m2) == pytest.approx(0.04 * 0.09)

    def test_monte_carlo_x1x2(self):
        rng = np.random.default_rng(2)
        x1 = 2.0 + 0.1 * rng.standard_normal(2_000_000)
        x2 = -1.0 + 0.1 * rng.standard_normal(2_000_000)
        pred = product_variance((2.0, 4.01), (-1.0, 1.01))
        assert np.var(x1 * x2) == pytest.approx(pred, rel=5e-3)


class TestTerms:
    def test_two_dim_cubic(self):
        labels = [t.label for t in polynomial_terms(2, 3)]
        assert labels == ["1", "x1", "x2", "x1^2", "x1·x2", "x2^2", "x1^3", "x1^2·x2", "x1·x2^2",
                          "x2^3"]

    @given(st.integers(1, 4), st.integers(1, 4))
    def test_count(self, dim, degree):
        terms = polynomial_terms(dim, degree)
        assert len(terms) == math.comb(degree + dim, dim)
        assert len({t.exponents for t in terms}) == len(terms)
        assert [t.degree for t in terms] == sorted(t.degree for t in terms)

    @given(st.integers(1, 3), st.integers(1, 4))
    def test_label_roundtrip(self, dim, degree):
        for term in polynomial_terms(dim, degree):
            assert parse_label(term.label, dim) == term

    def test_bad_degree(self):
        with pytest.raises(ValueError):
            polynomial_terms(2, 0)

    def test_evaluate(self):
        X = np.array([[2.0, 3.0]])
        assert evaluate_terms(X, [TermDescriptor((2, 1))])[0, 0] == 12.0


class TestLibrary:
    def setup_method(self):
        dt = 0.1
        self.clean = simulate(cubic_osc(), [1.0, 0.0], 5.0, dt, n_samples=50)
        self.ops = build_operators(make_stencil("weak", dt, points=7, p=4), 50)

    def test_noiseless_variance_is_zero(self):
        lib = build_library(self.clean, self.ops, 3)
        assert lib.n_terms == 10
        assert np.all(lib.var_Theta == 0) and np.all(lib.var_D == 0)

    def test_columns(self):
        ts = add_noise(self.clean, 0.01, 0)
        lib = build_library(ts, self.ops, 3)
        assert np.all(lib.Theta[:, 0] == 1) and np.all(lib.var_Theta[:, 0] == 0)
        assert np.allclose(lib.var_Theta[:, 1:3], 1e-4)
        j = lib.labels.index("x1^3")
        assert np.allclose(lib.var_Theta[:, j], power_variance(ts.X[:, 0], 0.01, 3))
        assert np.allclose(lib.D_mat, self.ops.L_I @ lib.Theta)
        assert np.allclose(lib.var_D, self.ops.L_I_sq @ lib.var_Theta)
        assert lib.D_mat.shape == (44, 10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_library(self.clean, self.ops, terms=[TermDescriptor((1, 0, 0))])

    @pytest.mark.parametrize("term", polynomial_terms(2, 3)[1:], ids=lambda t: t.label)
    def test_monte_carlo_fidelity(self, term):
        mu = np.array([1.3, -0.8])
        sd = 0.2 * np.abs(mu)
        rng = np.random.default_rng(hash(term.exponents) % 2**32)
        draws = mu + sd * rng.standard_normal((100_000, 2))
        empirical = evaluate_terms(draws, [term])[:, 0].var()
        predicted = variance_terms(mu[None], sd[None] ** 2, [term])[0, 0]
        assert predicted == pytest.approx(empirical, rel=0.10)


class TestSkewness:
    def test_small_noise_regime(self):
        sample, predicted, skew = skewness_check([2.0], [0.05], TermDescriptor((3,)), 200_000)
        assert sample == pytest.approx(predicted, rel=0.02)
        assert abs(skew) < 0.3

    def test_flags_breakdown(self):
        _, _, skew = skewness_check([0.1], [1.0], TermDescriptor((2,)), 200_000)
        assert skew > 2  # chi-square-like tail


def test_timeseries_variance_dimensions():
    ts = TimeSeries(np.arange(3.0), np.ones((3, 2)), [0.1, 0.2])
    var = variance_terms(ts.X, ts.sigma_x2, polynomial_terms(2, 1))
    assert np.allclose(var, [[0, 0.1, 0.2]] * 3)

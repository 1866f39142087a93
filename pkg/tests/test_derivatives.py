from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bsindy.derivatives import (InsufficientDataError, apply, apply_variance, build_operators,
                                central_difference_stencil, central_weights, interior_times,
                                make_stencil, project, weak_form_stencil)
from bsindy.dynamics import add_noise, simulate, van_der_pol


def _norm2(M):
    return np.linalg.norm(M.toarray(), 2)


class TestCentralDifference:
    def test_second_order(self):
        assert central_weights(1) == [Fraction(-1, 2), Fraction(0), Fraction(1, 2)]

    def test_fourth_order_bit_exact(self):
        s = central_difference_stencil(2, 1.0)
        assert list(s.a) == [1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]
        assert list(s.b) == [0, 0, 1, 0, 0]

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 6])
    def test_polynomial_exactness(self, n):
        dt = 0.05
        ops = build_operators(central_difference_stencil(n, dt), 6 * n)
        t = dt * (np.arange(6 * n) - 3 * n)
        for k in range(2 * n + 1):
            truth = k * t ** (k - 1) if k else np.zeros_like(t)
            assert np.allclose(apply(ops, t**k), truth[n:-n], atol=1e-10, rtol=0)

    @given(st.integers(1, 8))
    def test_antisymmetric(self, n):
        a = central_difference_stencil(n, 1.0).a
        assert np.allclose(a, -a[::-1])

    def test_sine(self):
        dt = 0.01
        t = dt * np.arange(400)
        ops = build_operators(central_difference_stencil(4, dt), t.size)
        assert np.max(np.abs(apply(ops, np.sin(t)) - np.cos(interior_times(ops, t)))) < 1e-8

    def test_invalid(self):
        with pytest.raises(ValueError):
            central_difference_stencil(0, 0.1)
        with pytest.raises(ValueError):
            central_difference_stencil(2, 0.0)


class TestWeakForm:
    @given(st.integers(2, 7), st.integers(1, 5), st.floats(1e-3, 1.0), st.floats(-3, 3))
    def test_constant_and_linear(self, n, p, dt, c):
        ops = build_operators(weak_form_stencil(n, dt, p), 2 * n + 6)
        t = dt * np.arange(2 * n + 6)
        assert np.allclose(apply(ops, np.full_like(t, c)), 0.0, atol=1e-9 * (1 + abs(c)) / dt)
        assert np.allclose(project(ops, np.full_like(t, c)), c)
        assert np.allclose(apply(ops, t), 1.0)

    def test_compact_support(self):
        s = weak_form_stencil(4, 0.1, 2)
        assert s.a.size == s.b.size == 9
        assert s.a[0] == s.a[-1] == 0 and s.b[0] == s.b[-1] == 0  # phi vanishes at the ends
        assert np.isclose(s.b.sum(), 1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            weak_form_stencil(1, 0.1, 2)
        with pytest.raises(ValueError):
            weak_form_stencil(3, 0.1, 0)

    def test_beats_fd_on_noisy_van_der_pol(self):
        dt = 0.025
        clean = simulate(van_der_pol(), [2.0, 0.0], 12.0, dt)
        noisy = add_noise(clean, 0.1, 3)
        xdot = np.array([van_der_pol()(x) for x in clean.X])
        err = {}
        for name, st_ in {"fd": make_stencil("fd", dt, order=8),
                          "weak": make_stencil("weak", dt, points=9, p=2)}.items():
            ops = build_operators(st_, clean.n_samples)
            err[name] = np.sqrt(np.mean((apply(ops, noisy.X) - xdot[4:-4]) ** 2))
        assert err["weak"] < err["fd"]


class TestOperators:
    def test_single_row(self):
        ops = build_operators(central_difference_stencil(4, 0.1), 9)
        assert ops.shape == (1, 9)

    def test_band_structure(self):
        ops = build_operators(central_difference_stencil(4, 0.1), 100)
        assert ops.shape == (92, 100)
        assert np.all(np.diff(ops.L_I.indptr) == 1)
        dense = ops.L_dt.toarray()
        assert np.all((dense != 0).sum(axis=1) == 8)  # centre weight is exactly zero
        assert np.allclose(dense.sum(axis=1), 0.0)
        assert np.array_equal(dense[5, 5:14], ops.stencil.a)
        assert np.allclose(ops.L_dt_sq.toarray(), dense**2)

    def test_weak_rows_have_width_nonzeros(self):
        ops = build_operators(weak_form_stencil(4, 0.1, 2), 40)
        assert np.all(np.diff(ops.L_I.indptr) == 7)  # end weights vanish

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            build_operators(central_difference_stencil(4, 0.1), 8)

    def test_shape_mismatch(self):
        ops = build_operators(central_difference_stencil(1, 0.1), 10)
        with pytest.raises(ValueError):
            apply(ops, np.zeros((11, 2)))

    def test_zero_variance(self):
        ops = build_operators(central_difference_stencil(2, 0.1), 20)
        assert np.all(apply_variance(ops, np.zeros((20, 3))) == 0)

    def test_variance_law_monte_carlo(self):
        dt, sigma = 0.1, 0.3
        ops = build_operators(central_difference_stencil(2, dt), 12)
        eps = sigma * np.random.default_rng(0).standard_normal((12, 10_000))
        empirical = apply(ops, eps).var(axis=1)
        expected = (2 / 144 + 2 * 4 / 9) / dt**2 * sigma**2
        assert np.allclose(apply_variance(ops, np.full((12, 1), sigma**2)), expected)
        assert np.allclose(empirical, expected, rtol=0.02 * 3)  # 3 sigma of the estimator
        assert abs(empirical.mean() / expected - 1) < 0.02

    def test_norm_scaling(self):
        # the weak-form window is held fixed in time (0.8 time units), so its node count grows
        dts = (0.1, 0.05, 0.025)
        fd_ratio, weak_ratio = [], []
        for dt in dts:
            fd = build_operators(make_stencil("fd", dt, order=8), 200)
            wk = build_operators(weak_form_stencil(round(0.4 / dt), dt, 2), 200)
            fd_ratio.append(_norm2(fd.L_dt) / _norm2(fd.L_I))
            weak_ratio.append(_norm2(wk.L_dt) / _norm2(wk.L_I))
        assert np.allclose(np.array(fd_ratio) * dts, fd_ratio[0] * dts[0], rtol=1e-6)
        assert max(weak_ratio) / min(weak_ratio) < 1.2
        assert fd_ratio[-1] / weak_ratio[-1] > 4


class TestMakeStencil:
    @pytest.mark.parametrize("kw", [dict(scheme="fd", order=3), dict(scheme="fd"),
                                    dict(scheme="weak", points=6), dict(scheme="spline")])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            make_stencil(dt=0.1, **kw)

    def test_orders(self):
        assert make_stencil("fd", 0.1, order=12).width == 13
        assert make_stencil("weak", 0.1, points=7, p=4).half_width == 3

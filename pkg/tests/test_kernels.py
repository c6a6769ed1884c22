import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracevo import kernels
from fracevo.kernels import MemoryWeights, Scheme


def test_grunwald_first_difference():
    np.testing.assert_array_equal(kernels.grunwald_weights(1.0, 3), [1.0, -1.0, 0.0, 0.0])


def test_grunwald_half_matches_binomial():
    np.testing.assert_allclose(kernels.grunwald_weights(0.5, 3), [1.0, -0.5, -0.125, -0.0625], rtol=1e-15)


def test_grunwald_partial_sums_positive_decreasing():
    s = np.cumsum(kernels.grunwald_weights(0.5, 10_000))
    assert np.all(s > 0) and np.all(s <= 1.0)
    assert np.all(np.diff(s) < 0)
    assert s[-1] < 0.01


@pytest.mark.parametrize("beta", [0.1, 0.37, 0.9])
def test_grunwald_against_mpmath(beta):
    w = kernels.grunwald_weights(beta, 300)
    ref = [float((-1) ** k * mpmath.binomial(beta, k)) for k in range(301)]
    np.testing.assert_allclose(w, ref, rtol=1e-13)
    assert np.all(w[1:] < 0)


@pytest.mark.parametrize("beta", [0.0, -0.5, 1.2, float("nan")])
def test_grunwald_rejects_beta(beta):
    with pytest.raises(ValueError):
        kernels.grunwald_weights(beta, 3)


def test_l1_coefficients_examples():
    np.testing.assert_allclose(kernels.l1_coefficients(0.5, 2), [1.0, math.sqrt(2) - 1, math.sqrt(3) - math.sqrt(2)])
    np.testing.assert_array_equal(kernels.l1_coefficients(0.3, 0), [1.0])
    b = kernels.l1_coefficients(0.5, 100)
    assert np.all(b > 0) and np.all(np.diff(b) < 0)


def test_l1_rejects_beta_one():
    with pytest.raises(ValueError, match="GL"):
        kernels.l1_coefficients(1.0, 4)


def test_memory_weights_scale():
    mw = MemoryWeights.build(Scheme.L1, 0.5, 4, 0.25)
    assert mw.scale == pytest.approx(0.25**-0.5 / math.gamma(1.5))
    assert MemoryWeights.build("GL", 0.5, 4, 0.25).scale == pytest.approx(2.0)


def test_fractional_integral_examples():
    dt = 1.0 / 64
    one = np.ones(65)
    assert kernels.fractional_integral(one, 1.0, dt)[-1] == pytest.approx(1.0, abs=1e-14)
    assert kernels.fractional_integral(one, 0.5, dt)[-1] == pytest.approx(1.0 / math.gamma(1.5), rel=1e-13)
    np.testing.assert_array_equal(kernels.fractional_integral(np.zeros(65), 0.5, dt), 0.0)
    assert kernels.fractional_integral(one, 0.5, dt)[0] == 0.0


def test_fractional_integral_rejects_dt():
    with pytest.raises(ValueError):
        kernels.fractional_integral(np.ones(4), 0.5, 0.0)


def test_caputo_of_linear_function():
    dt = 1.0 / 1024
    t = dt * np.arange(1025)
    d = kernels.caputo_derivative(t, 0.0, 0.5, dt)
    # L1 is exact for piecewise linear data
    assert d[-1] == pytest.approx(1.0 / math.gamma(1.5), rel=1e-12)
    d_gl = kernels.caputo_derivative(t, 0.0, 0.5, dt, Scheme.GL)
    assert d_gl[-1] == pytest.approx(1.0 / math.gamma(1.5), rel=1e-2)


def test_caputo_of_constant_is_zero():
    x0 = np.array([1.0, -2.0])
    u = np.tile(x0, (20, 1))
    for scheme in Scheme:
        np.testing.assert_array_equal(kernels.caputo_derivative(u, x0, 0.4, 0.1, scheme), 0.0)


def test_caputo_length_mismatch():
    with pytest.raises(ValueError):
        kernels.caputo_derivative(np.zeros((5, 2)), np.zeros(3), 0.5, 0.1)


def test_left_inverse_improves():
    errs = []
    for n in (64, 256, 1024):
        dt = 1.0 / n
        f = np.exp(-dt * np.arange(n + 1))
        d = kernels.caputo_derivative(kernels.fractional_integral(f, 0.5, dt), 0.0, 0.5, dt)
        errs.append(abs(d[-1] - f[-1]))
    assert errs[0] > errs[1] > errs[2]


def test_kernel_semigroup_pointwise_order():
    errs = []
    dts = 2.0 ** -np.arange(6, 10)
    for dt in dts:
        t = dt * np.arange(int(round(1 / dt)) + 1)
        with np.errstate(divide="ignore"):
            c = kernels.fractional_integral(kernels.g_kernel(0.5, t), 0.5, dt)
        errs.append(abs(c[-1] - 1.0))
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert order >= 0.4


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 0.95), st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_l1_energy_inequality(beta, tail):
    u = np.array([0.0, *tail])
    du = kernels.caputo_derivative(u, 0.0, beta, 0.05)
    du2 = kernels.caputo_derivative(u * u, 0.0, beta, 0.05)
    slack = 1e-12 * (np.abs(u * du) + np.abs(du2)) + 1e-300
    assert np.all(u * du - 0.5 * du2 >= -slack)


def test_mittag_leffler_closed_forms():
    assert kernels.mittag_leffler(1.0, -1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert kernels.mittag_leffler(2.0, -(math.pi / 2) ** 2) == pytest.approx(0.0, abs=1e-15)
    assert kernels.mittag_leffler(0.5, 0.0) == 1.0


def test_mittag_leffler_half_series_oracle():
    mpmath.mp.dps = 50
    ref = mpmath.fsum(mpmath.mpf(-1) ** k / mpmath.gamma(mpmath.mpf(k) / 2 + 1) for k in range(200))
    assert kernels.mittag_leffler(0.5, -1.0) == pytest.approx(float(ref), rel=1e-13)


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8, 0.95])
@pytest.mark.parametrize("z", [-0.3, -4.0, -12.0, -60.0, -400.0])
def test_mittag_leffler_against_mpmath(beta, z):
    mpmath.mp.dps = 40
    b = mpmath.mpf(beta)
    t = mpmath.mpf(-z) ** (1 / b)
    kernel = lambda s: mpmath.exp(-s ** (1 / b) * t) / (s * s + 2 * s * mpmath.cos(b * mpmath.pi) + 1)
    ref = mpmath.sin(b * mpmath.pi) / (mpmath.pi * b) * mpmath.quad(kernel, [0, 1, mpmath.inf])
    assert kernels.mittag_leffler(beta, z) == pytest.approx(float(ref), rel=1e-10)


@pytest.mark.parametrize("beta", [1.3, 1.7])
@pytest.mark.parametrize("z", [-3.0, -25.0, -45.0])
def test_mittag_leffler_superdiffusive_branch(beta, z):
    mpmath.mp.dps = 80
    ref = mpmath.nsum(lambda k: mpmath.mpf(z) ** k / mpmath.gamma(beta * k + 1), [0, mpmath.inf])
    assert kernels.mittag_leffler(beta, z) == pytest.approx(float(ref), rel=1e-10, abs=1e-14)


def test_mittag_leffler_monotone_on_negative_axis():
    z = -np.linspace(0, 40, 161)
    for beta in (0.3, 0.7, 1.0):
        e = np.array([kernels.mittag_leffler(beta, x) for x in z])
        assert np.all(e > 0) and np.all(e <= 1.0) and np.all(np.diff(e) <= 1e-15)


def test_mittag_leffler_overflow_guard():
    with pytest.raises(OverflowError):
        kernels.mittag_leffler(0.5, 1e4)
    with pytest.raises(ValueError):
        kernels.mittag_leffler(2.5, -1.0)


def test_subordinator_laplace_transform():
    s = kernels.sample_stable_subordinator(0.5, 1.0, 100_000, seed=3)
    assert np.all(s.values > 0)
    mean, se = s.laplace_transform(1.0)
    assert abs(mean - math.exp(-1.0)) <= 3 * se


def test_subordinator_deterministic_and_gated():
    a = kernels.sample_stable_subordinator(0.7, 2.0, 100, seed=11).values
    b = kernels.sample_stable_subordinator(0.7, 2.0, 100, seed=11).values
    np.testing.assert_array_equal(a, b)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            kernels.sample_stable_subordinator(bad, 1.0, 10, seed=0)

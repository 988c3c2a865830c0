import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallball.heat_kernel import (KernelPoint, fit_kernel_constant, heat_kernel, kernel_constant,
                                   kernel_convolve, kernel_fourier_sum, kernel_image_sum,
                                   kernel_upper_bound, lemma_g_integrals, wrap_star)

# Frozen values from an independent mpmath oracle (30 digits): the theta-function
# form jtheta(3, pi x, exp(-2 pi^2 t)) for t >= 0.05, a direct image sum below that,
# and tanh-sinh quadrature in time for the integrals.
ORACLE_G = {
    (0.1, 0.3): 0.91354575886691620713,
    (1.0, 0.5): 0.99999999464942401785,
    (0.01, 0.0): 3.98942280401432673788,
}
ORACLE_TAIL_0_001 = 0.05641895835480525548  # int_0^0.01 G(2r, 0) dr
ORACLE_SPACE_1_01 = 0.09  # int_0^1 int [G(r,-z) - G(r,0.1-z)]^2 dz dr
ORACLE_TIME_05_051 = 0.02336949772113233749
ORACLE_G2_01_03 = 0.80441083205051133312  # G on [0,2) at (0.1, 0.3)


@pytest.mark.parametrize("t,x", list(ORACLE_G))
def test_kernel_matches_theta_oracle(t, x):
    p = KernelPoint(t, x)
    assert kernel_image_sum(p) == pytest.approx(ORACLE_G[(t, x)], abs=1e-12)
    assert kernel_fourier_sum(p) == pytest.approx(ORACLE_G[(t, x)], abs=1e-12)
    assert float(heat_kernel(t, x)) == pytest.approx(ORACLE_G[(t, x)], abs=1e-12)


def test_kernel_on_longer_circle_matches_oracle():
    assert float(heat_kernel(0.1, 0.3, 2.0)) == pytest.approx(ORACLE_G2_01_03, abs=1e-12)


def test_small_time_peak_is_gaussian():
    assert kernel_image_sum(KernelPoint(0.01, 0.0)) == pytest.approx((2 * math.pi * 0.01) ** -0.5, abs=1e-9)


def test_large_time_flattens_to_one():
    assert kernel_fourier_sum(KernelPoint(10.0, 0.3)) == pytest.approx(1.0, abs=1e-9)


def test_non_positive_time_rejected():
    with pytest.raises(ValueError):
        kernel_image_sum(KernelPoint(0.0, 0.1))
    with pytest.raises(ValueError):
        kernel_fourier_sum(KernelPoint(-1.0, 0.1))
    with pytest.raises(ValueError):
        heat_kernel(-1.0, 0.1)


@pytest.mark.parametrize("x,expected", [(0.25, 0.25), (0.75, -0.25), (0.5, 0.5)])
def test_wrap_star_branches(x, expected):
    assert wrap_star(x) == pytest.approx(expected)


def test_wrap_star_domain():
    with pytest.raises(ValueError):
        wrap_star(1.5)


@given(st.floats(1e-4, 10.0), st.floats(0.0, 0.999))
@settings(max_examples=60, deadline=None)
def test_series_agree_and_symmetric(t, x):
    p = KernelPoint(t, x)
    a, b = kernel_image_sum(p), kernel_fourier_sum(p)
    assert abs(a - b) < 1e-9
    assert kernel_image_sum(KernelPoint(t, (1.0 - x) % 1.0)) == pytest.approx(a, rel=1e-12, abs=1e-300)
    assert float(heat_kernel(t, x)) >= 0.0


@pytest.mark.parametrize("t", [1e-3, 0.05, 1.0])
def test_mass_one(t):
    x = np.arange(4096) / 4096
    assert heat_kernel(t, x).mean() == pytest.approx(1.0, abs=1e-10)


@given(st.floats(1e-4, 1.0), st.floats(0.0, 0.999))
@settings(max_examples=60, deadline=None)
def test_upper_bound_dominates(t, x):
    p = KernelPoint(t, x)
    assert kernel_upper_bound(p) >= kernel_image_sum(p)


def test_upper_bound_vanishes_near_zero_time():
    assert kernel_upper_bound(KernelPoint(1e-4, 0.5)) < 1e-100


def test_fitted_constant_is_finite_and_modest():
    c = kernel_constant()
    assert 1.0 <= c <= 4.0
    assert fit_kernel_constant() == pytest.approx(c)


def test_upper_bound_time_window():
    with pytest.raises(ValueError):
        kernel_upper_bound(KernelPoint(2.0, 0.1))


def test_convolve_constants_identity_and_mode():
    n = 64
    x = np.arange(n) / n
    c = np.full(n, 2.5)
    assert np.allclose(kernel_convolve(c, 0.3), 2.5, atol=1e-13)
    prof = np.cos(2 * np.pi * x)
    assert np.array_equal(kernel_convolve(prof, 0.0), prof)
    t = 0.02
    assert np.allclose(kernel_convolve(prof, t), np.exp(-(2 * np.pi) ** 2 * t / 2) * prof, atol=1e-12)


@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_convolve_semigroup(s, t, seed):
    f = np.random.default_rng(seed).normal(size=32)
    assert np.allclose(kernel_convolve(kernel_convolve(f, s), t), kernel_convolve(f, s + t), atol=1e-8)


def test_lemma_integrals_match_oracle():
    assert lemma_g_integrals(0.0, 0.01, 0.0, 0.0).tail_square == pytest.approx(ORACLE_TAIL_0_001, rel=1e-10)
    assert lemma_g_integrals(0.0, 1.0, 0.0, 0.1).space_increment == pytest.approx(ORACLE_SPACE_1_01, rel=1e-10)
    assert lemma_g_integrals(0.5, 0.51, 0.0, 0.0).time_increment == pytest.approx(ORACLE_TIME_05_051, rel=1e-10)


def test_lemma_integrals_trivial_cases():
    assert lemma_g_integrals(0.2, 0.5, 0.3, 0.3).space_increment == 0.0
    assert lemma_g_integrals(0.0, 0.5, 0.3, 0.7).time_increment == 0.0
    with pytest.raises(ValueError):
        lemma_g_integrals(0.5, 0.4, 0.0, 0.0)


def test_lemma_exponents():
    d = np.geomspace(1e-4, 1e-2, 9)
    space = [lemma_g_integrals(0.0, 1.0, 0.0, v).space_increment for v in d]
    h = np.geomspace(1e-5, 1e-3, 9)
    tail = [lemma_g_integrals(0.5, 0.5 + v, 0.0, 0.0).tail_square for v in h]
    time = [lemma_g_integrals(0.5, 0.5 + v, 0.0, 0.0).time_increment for v in h]
    assert np.polyfit(np.log(d), np.log(space), 1)[0] == pytest.approx(1.0, abs=0.05)
    assert np.polyfit(np.log(h), np.log(tail), 1)[0] == pytest.approx(0.5, abs=0.05)
    assert np.polyfit(np.log(h), np.log(time), 1)[0] == pytest.approx(0.5, abs=0.05)

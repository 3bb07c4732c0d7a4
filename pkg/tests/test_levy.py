import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from duhamel_oracle import DuhamelOracle, merton_psi, vg_psi
from pathlab.benchmarks import cev_merton, cev_vg
from pathlab.levy import (
    CEV,
    LocalLevyModel,
    Merton,
    NoJumps,
    OrderError,
    StripError,
    TaylorVol,
    VarianceGamma,
    black_call,
    char_exponent,
    charfun_approx,
    g_hat,
    implied_vol,
    lewis_price,
)

MERTON = cev_merton()
VG = cev_vg()


def merton_closed_form(S, K, T, sigma, r, lam, m, delta, terms=80):
    k = math.exp(m + 0.5 * delta**2) - 1
    lam1 = lam * (1 + k)
    total = 0.0
    for n in range(terms):
        w = math.exp(-lam1 * T) * (lam1 * T) ** n / math.factorial(n)
        sn = math.sqrt(sigma**2 + n * delta**2 / T)
        rn = r - lam * k + n * math.log(1 + k) / T
        total += w * black_call(S, K, T, sn, rn)
    return total


def test_cev_alphas():
    a = CEV(0.2, 0.5).alphas(0.0)
    # a(x) = 0.04 exp(-x): alpha_0 = 0.04, alpha_k = 0.04 (-1)^k / (2 k!)
    assert a[0] == pytest.approx(0.04)
    for k in range(1, 5):
        assert a[k] == pytest.approx(0.04 * (-1) ** k / (2 * math.factorial(k)))


@pytest.mark.parametrize("model", [MERTON, VG], ids=["merton", "vg"])
def test_psi_normalization(model):
    psi0 = char_exponent(model, 0.0, 0.0)[0]
    psi_i = char_exponent(model, -1j, 0.0)[0]
    assert abs(psi0) < 1e-12
    assert abs(psi_i - model.r) < 1e-12


@pytest.mark.parametrize("model", [MERTON, VG], ids=["merton", "vg"])
@pytest.mark.parametrize("n", range(5))
def test_charfun_at_zero_is_one(model, n):
    assert abs(charfun_approx(model, n, 0.0, 0.0, 1.0, 0.0) - 1) < 1e-12


@given(st.floats(0.01, 30.0), st.integers(0, 4), st.floats(0.05, 5.0))
def test_hermitian_symmetry(xi, n, T):
    a = charfun_approx(MERTON, n, 0.0, 0.0, T, xi)
    b = charfun_approx(MERTON, n, 0.0, 0.0, T, -xi)
    assert abs(a - np.conj(b)) <= 1e-12 * max(1.0, abs(a))


def test_psi_matches_compensator_split():
    # the same exponent written with an explicit compensator
    for xi in (0.3, 1.0, -2.5, 0.7 - 0.4j):
        ours = char_exponent(MERTON, xi, 0.0)[0]
        other = merton_psi(0.04, 0.05, 0.3, -0.1, 0.4)(xi)
        assert abs(ours - other) < 1e-14
        assert abs(char_exponent(VG, xi, 0.0)[0] - vg_psi(0.04, 0.05, 0.15, -0.1, 0.2)(xi)) < 1e-14


def test_psi_derivatives_by_finite_difference():
    h = 1e-4
    for model in (MERTON, VG):
        for xi in (0.4, 1.3 - 0.5j):
            p = char_exponent(model, xi, 0.0)
            for k in range(1, 5):
                lower = char_exponent(model, xi - h, 0.0)[k - 1]
                upper = char_exponent(model, xi + h, 0.0)[k - 1]
                assert abs((upper - lower) / (2 * h) - p[k]) < 1e-6 * max(1, abs(p[k]))


def test_vg_strip_violation():
    with pytest.raises(StripError):
        char_exponent(VG, -40j, 0.0)


def test_vg_parameter_constraint():
    with pytest.raises(ValueError):
        VarianceGamma(kappa=5.0, theta=0.3, rho=0.2)


def test_orders_three_and_four_need_xbar_equal_x():
    with pytest.raises(OrderError):
        g_hat(MERTON, 3, 0.0, 0.1, 1.0, 1.0, xbar=0.0)
    with pytest.raises(OrderError):
        g_hat(MERTON, 5, 0.0, 0.0, 1.0, 1.0)


XI_POINTS = [0.3, 1.0, 2.5, 4.0 - 0.5j, 7.0]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_terms_match_duhamel_oracle(k):
    a = MERTON.alphas(0.0)
    psi = merton_psi(a[0], 0.05, 0.3, -0.1, 0.4)
    for xi in XI_POINTS:
        want = DuhamelOracle(psi, a, 0.0, 0.0, xi, nodes=8).value(k, 0.5)
        got = g_hat(MERTON, k, 0.0, 0.0, 0.5, xi)
        assert abs(got - want) <= 1e-8 * abs(want)


@pytest.mark.parametrize("k", [1, 2])
def test_terms_off_basepoint_match_oracle(k):
    x, xb = 0.15, -0.05
    a = MERTON.alphas(xb)
    psi = merton_psi(a[0], 0.05, 0.3, -0.1, 0.4)
    for xi in (0.5, 2.0):
        want = DuhamelOracle(psi, a, x, xb, xi, nodes=8).value(k, 1.0)
        got = g_hat(MERTON, k, 0.0, x, 1.0, xi, xbar=xb)
        assert abs(got - want) <= 1e-8 * abs(want)


def test_vg_terms_match_oracle():
    a = VG.alphas(0.0)
    psi = vg_psi(a[0], 0.05, 0.15, -0.1, 0.2)
    for k in (2, 4):
        want = DuhamelOracle(psi, a, 0.0, 0.0, 1.5, nodes=8).value(k, 0.25)
        assert abs(g_hat(VG, k, 0.0, 0.0, 0.25, 1.5) - want) <= 1e-8 * abs(want)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_flat_vol_terms_vanish(k):
    model = LocalLevyModel(TaylorVol((0.04,)), Merton(0.3, -0.1, 0.4), 0.05)
    xi = np.linspace(-10, 10, 20)
    assert np.all(g_hat(model, k, 0.0, 0.0, 1.0, xi) == 0)


def test_order_zero_is_black_scholes():
    model = LocalLevyModel(TaylorVol((0.04,)), NoJumps(), 0.03)
    for K in (0.7, 1.0, 1.4):
        assert lewis_price(model, 0, K, 0.0, 1.0, 1.0) == pytest.approx(black_call(1.0, K, 1.0, 0.2, 0.03), abs=1e-8)


def test_order_zero_is_merton():
    for K, T in ((0.8, 0.25), (1.0, 1.0), (1.5, 2.0)):
        want = merton_closed_form(1.0, K, T, 0.2, 0.05, 0.3, -0.1, 0.4)
        assert lewis_price(MERTON, 0, K, 0.0, 1.0, T) == pytest.approx(want, abs=1e-8)


def test_contour_invariance():
    for K, T in ((0.75, 0.25), (1.0, 1.0), (2.0, 1.0)):
        p = [lewis_price(MERTON, 4, K, 0.0, 1.0, T, gamma=g) for g in (1.25, 1.5, 2.0)]
        assert max(p) - min(p) < 1e-6


def test_gamma_must_exceed_one():
    with pytest.raises(ValueError):
        lewis_price(MERTON, 2, 1.0, 0.0, 1.0, 1.0, gamma=0.5)


@given(st.floats(0.05, 1.0), st.floats(0.6, 1.6), st.floats(0.1, 3.0))
def test_implied_vol_roundtrip(sigma, K, T):
    price = black_call(1.0, K, T, sigma, 0.05)
    if price - max(1.0 - K * math.exp(-0.05 * T), 0) < 1e-10:
        return
    assert implied_vol(price, K, T, 1.0, 0.05) == pytest.approx(sigma, rel=1e-6)


def test_implied_vol_bounds():
    with pytest.raises(ValueError):
        implied_vol(1.5, 1.0, 1.0, 1.0)


def test_black_call_matches_norm_formula():
    d1 = (math.log(1 / 0.9) + 0.5 * 0.04) / 0.2
    want = norm.cdf(d1) - 0.9 * norm.cdf(d1 - 0.2)
    assert black_call(1.0, 0.9, 1.0, 0.2) == pytest.approx(want, rel=1e-14)

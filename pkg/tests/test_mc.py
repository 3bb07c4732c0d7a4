import math

import numpy as np
import pytest

from pathlab.benchmarks import cev_merton, cev_vg
from pathlab.levy import charfun_approx
from pathlab.mc import (
    MCConfig,
    ResourceCapError,
    bs_path_functionals,
    call_prices,
    empirical_charfun,
    mc_price,
    philox_uniforms,
    simulate,
)

MERTON = cev_merton()
VG = cev_vg()


def test_philox_uniforms_deterministic_and_in_range():
    u = [philox_uniforms(np.uint64(7), p, 3, 0) for p in range(50)]
    again = [philox_uniforms(np.uint64(7), p, 3, 0) for p in range(50)]
    assert np.array_equal(np.array(u), np.array(again))
    flat = np.ravel(u)
    assert np.all((flat > 0) & (flat < 1))


def test_same_seed_same_ensemble():
    cfg = MCConfig(n_paths=2000, seed=5, horizon=0.5)
    a = simulate(MERTON, cfg).x
    b = simulate(MERTON, cfg).x
    assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate(MERTON, MCConfig(n_paths=2000, seed=6, horizon=0.5)).x)


@pytest.mark.parametrize("model", [MERTON, VG], ids=["merton", "vg"])
def test_discounted_price_is_martingale(model):
    cfg = MCConfig(n_paths=200_000, seed=1, horizon=1.0)
    est = mc_price(model, lambda s: s, cfg)
    assert abs(est.price - 1.0) < 4 * est.se + 2e-3


def test_merton_jump_rate():
    cfg = MCConfig(n_paths=200_000, seed=2, horizon=2.0, antithetic=False)
    ens = simulate(MERTON, cfg)
    mean = ens.jump_counts.mean()
    assert mean == pytest.approx(MERTON.jumps.lam * 2.0, abs=4 * math.sqrt(0.6 / 200_000))


def test_zero_and_digital_payoffs():
    cfg = MCConfig(n_paths=10_000, seed=3, horizon=0.5)
    assert mc_price(MERTON, lambda s: 0 * s, cfg).price == 0.0
    one = mc_price(MERTON, lambda s: np.ones_like(s), cfg)
    assert one.price == pytest.approx(math.exp(-0.05 * 0.5), rel=1e-12)
    assert one.se == pytest.approx(0.0, abs=1e-15)


def test_standard_error_scales_like_inverse_sqrt():
    call = lambda s: np.maximum(s - 1.0, 0.0)
    small = mc_price(MERTON, call, MCConfig(n_paths=40_000, seed=4, horizon=0.5)).se
    big = mc_price(MERTON, call, MCConfig(n_paths=160_000, seed=4, horizon=0.5)).se
    assert 1.8 <= small / big <= 2.2


def test_resource_cap():
    with pytest.raises(ResourceCapError):
        simulate(MERTON, MCConfig(n_paths=1000, horizon=1.0, max_path_steps=1000))


def test_odd_antithetic_rejected():
    with pytest.raises(ValueError):
        MCConfig(n_paths=3)


def test_call_prices_from_shared_ensemble():
    cfg = MCConfig(n_paths=20_000, seed=9)
    ens = simulate(MERTON, cfg, maturities=[0.25, 1.0])
    prices = call_prices(ens, 0.05, {0.25: [0.9, 1.1], 1.0: [1.0]})
    assert set(prices) == {(0.25, 0.9), (0.25, 1.1), (1.0, 1.0)}
    assert prices[0.25, 0.9].price > prices[0.25, 1.1].price


@pytest.mark.slow
def test_empirical_charfun_matches_expansion():
    cfg = MCConfig(n_paths=1_000_000, seed=1, horizon=0.25)
    xi = np.array([0.5, 1.0, 2.0])
    got, se = empirical_charfun(MERTON, cfg, xi)
    want = charfun_approx(MERTON, 4, 0.0, 0.0, 0.25, xi)
    # Euler bias at 250 steps/yr is well below the statistical error here
    assert np.all(np.abs(got - want) <= 3 * se + 1e-4)


def test_bs_functionals_flat_vol():
    s = bs_path_functionals(lambda t: 0.2, 1.0, 200_000, 50, seed=1, fixings=(0.5,))
    est = s.summary(s.terminal)
    assert abs(est.price - 1.0) < 4 * est.se
    # E[int_0^T S] = T for a driftless price
    avg = s.summary(s.integral)
    assert abs(avg.price - 1.0) < 4 * avg.se
    assert np.all(s.survival == 1.0)
    assert s.fixings.shape == (200_000, 1)


def test_bs_functionals_zero_vol():
    s = bs_path_functionals(lambda t: 0.0 * t, 2.0, 4, 8, seed=1, S0=1.5)
    assert np.allclose(s.terminal, 1.5)
    assert np.allclose(s.integral, 3.0)
    assert np.allclose(s.log_integral, 2.0 * math.log(1.5))


def test_bs_functionals_fixings_must_be_on_grid():
    with pytest.raises(ValueError):
        bs_path_functionals(lambda t: 0.2, 1.0, 10, 10, seed=1, fixings=(0.33,))

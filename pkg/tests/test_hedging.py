import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathlab.functional import StoppedPath, spot
from pathlab.hedging import (
    HEDGE_QV_TOL,
    hedge_batch,
    hedging_error_formula,
    jump_contribution,
    perturbed_path,
    robustness_check,
    simulate_delta_hedge,
    vertical_convexity_check,
    write_batch_csv,
)
from pathlab.paths import DyadicPartitionSequence, QVEstimate, SampledPath, gbm_path, local_vol_curve, qv_limit
from pathlab.pricing import (
    ArithmeticAsianCall,
    BSModelSpec,
    EuropeanCall,
    GeometricAsianCall,
    UpOutCall,
    european_value,
    pricing_functional,
)

LEVEL = 14
P14 = DyadicPartitionSequence(1.0, LEVEL)


def call(sigma, K=1.0):
    return pricing_functional(BSModelSpec.constant(sigma, 1.0), EuropeanCall(K))


def f0(F, path):
    return float(F(StoppedPath.at(path, 0)))


@pytest.mark.parametrize("level", [1, 5, 10])
def test_holding_one_share_has_zero_error(level):
    p = gbm_path(0.3, 1.0, 10, 1)
    rep = simulate_delta_hedge(spot(), p, DyadicPartitionSequence(1.0, 10), level)
    assert abs(rep.direct_error) < 1e-13


def test_self_financing_identity():
    p = gbm_path(0.2, 1.0, 10, 2)
    rep = simulate_delta_hedge(call(0.2), p, DyadicPartitionSequence(1.0, 10))
    assert np.allclose(rep.portfolio, rep.portfolio[0] + rep.gains, atol=0)
    assert rep.gains[0] == 0.0


def test_correct_model_hedges_well():
    p = gbm_path(0.2, 1.0, LEVEL, 7)
    F = call(0.2)
    rep = simulate_delta_hedge(F, p, P14)
    assert abs(rep.direct_error) <= 0.01 * f0(F, p)


def test_flat_path_keeps_premium():
    p = SampledPath.uniform(1.0, np.full(2**8 + 1, 1.0))
    F = call(0.2)
    rep = simulate_delta_hedge(F, p, DyadicPartitionSequence(1.0, 8))
    assert rep.direct_error > 0
    assert rep.direct_error == pytest.approx(f0(F, p), rel=1e-12)


def test_formula_vanishes_when_model_uses_realized_vol():
    p = gbm_path(0.2, 1.0, 10, 3)
    smkt = local_vol_curve(p, 10)
    sigma = lambda t, x: smkt[np.minimum((np.asarray(t) * 2**10).round().astype(int), smkt.size - 1)]
    fe = hedging_error_formula(call(0.2), p, sigma, None, level=10)
    assert abs(fe) < 1e-12


def test_formula_vanishes_for_linear_functional():
    p = gbm_path(0.2, 1.0, 10, 3)
    assert hedging_error_formula(spot(), p, 0.4, None, level=10) == 0.0


def test_formula_inconclusive_without_qv_convergence():
    p = gbm_path(0.2, 1.0, 10, 3)
    qv = QVEstimate({9: 1.0, 10: 2.0}, 2.0, False, 10)
    rc = robustness_check(call(0.2), p, 0.3, qv)
    assert rc.verdict == "inconclusive" and rc.formula_error is None


def test_formula_matches_direct_error_under_misspecification():
    p = gbm_path(0.15, 1.0, LEVEL, 11)
    qv = qv_limit(p, P14, tol=HEDGE_QV_TOL)
    rep = simulate_delta_hedge(call(0.25), p, P14, model_sigma=0.25, qv=qv)
    assert rep.direct_error > 0
    assert rep.formula_error == pytest.approx(rep.direct_error, rel=0.05)


def test_overestimated_vol_is_robust_for_call():
    p = gbm_path(0.2, 1.0, LEVEL, 12)
    qv = qv_limit(p, P14, tol=HEDGE_QV_TOL)
    rc = robustness_check(call(0.3), p, 0.3, qv)
    assert rc.verdict == "robust"
    assert rc.diagnostics["gamma_min"] >= 0
    assert rc.diagnostics["vol_gap_min"] > 0


def test_underestimated_vol_is_not_robust():
    p = gbm_path(0.3, 1.0, LEVEL, 13)
    qv = qv_limit(p, P14, tol=HEDGE_QV_TOL)
    rc = robustness_check(call(0.15), p, 0.15, qv)
    assert rc.verdict == "not-robust"
    assert rc.formula_error < 0


def test_barrier_diagnostics_report_gamma_sign_change():
    # a path starting out of the money and drifting up towards the barrier
    n = 2**10
    t = np.linspace(0, 1, n + 1)
    rng = np.random.default_rng(4)
    logs = np.log(0.7) + 0.55 * t + np.concatenate([[0.0], np.cumsum(0.1 * np.sqrt(1 / n) * rng.standard_normal(n))])
    p = SampledPath.uniform(1.0, np.exp(logs))
    assert p.values.max() < 1.3
    m = BSModelSpec.constant(0.25, 1.0)
    F = pricing_functional(m, UpOutCall(1.0, 1.3))
    rc = robustness_check(F, p, 0.25, None, level=10, barrier=1.3)
    assert rc.diagnostics["gamma_sign_change"]
    assert rc.diagnostics["gamma_min"] < 0
    assert 0 < rc.diagnostics["gamma_min_spot_over_barrier"] < 1
    assert rc.verdict != "robust"


def test_jump_contribution_trivial_cases():
    p = gbm_path(0.2, 1.0, 8, 5)
    assert jump_contribution(call(0.2), p) == 0.0
    v = np.ones(2**8 + 1)
    v[128:] = 1.05
    jp = SampledPath.uniform(1.0, v, jumps={128: 1.0})
    assert abs(jump_contribution(spot(), jp)) < 1e-12
    assert jump_contribution(call(0.2), jp) < 0


@given(st.floats(-0.3, 0.3).filter(lambda x: abs(x) > 1e-3), st.integers(1, 255), st.floats(0.7, 1.4))
def test_jump_contribution_nonpositive_for_convex_value(size, k, K):
    v = np.ones(2**8 + 1)
    v[k:] = 1.0 + size
    jp = SampledPath.uniform(1.0, v, jumps={k: 1.0})
    assert jump_contribution(call(0.2, K), jp) <= 1e-12


def test_jump_term_reported_in_hedge():
    v = np.ones(2**8 + 1)
    v[128:] = 1.05
    jp = SampledPath.uniform(1.0, v, jumps={128: 1.0})
    rep = simulate_delta_hedge(call(0.2), jp, DyadicPartitionSequence(1.0, 8))
    assert rep.jump_term == pytest.approx(jump_contribution(call(0.2), jp))


def test_perturbed_path_scales_tail():
    p = gbm_path(0.2, 1.0, 4, 1)
    q = perturbed_path(p, 0.5, 0.1)
    assert np.allclose(q.values[:8], p.values[:8])
    assert np.allclose(q.values[8:], 1.1 * p.values[8:])


E_GRID = np.linspace(-0.1, 0.1, 21)


def test_arithmetic_asian_payoff_is_vertically_convex():
    p = gbm_path(0.2, 1.0, 8, 6)
    for t in (0.1, 0.5, 0.9):
        assert vertical_convexity_check(ArithmeticAsianCall(1.0), t, p, E_GRID).convex


def test_geometric_asian_payoff_kink_and_concave_tail():
    # on a flat path at the strike, v(e) = ((1 + e)^(1/2) - 1)^+ for t = T/2:
    # a convex kink at 0 with a concave branch for e > 0
    p = SampledPath.uniform(1.0, np.ones(2**8 + 1))
    h = 0.005
    res = vertical_convexity_check(GeometricAsianCall(1.0), 0.5, p, np.linspace(-4 * h, 4 * h, 9))
    kink = res.second_differences[3]
    assert kink == pytest.approx(np.sqrt(1 + h) - 1, rel=1e-9)
    assert np.all(res.second_differences[4:] < 0)
    assert np.all(np.abs(res.second_differences[4:]) < 1e-2 * kink)


def test_geometric_asian_payoff_concave_in_the_money():
    p = SampledPath.uniform(1.0, np.full(2**8 + 1, 1.2))
    res = vertical_convexity_check(GeometricAsianCall(1.0), 0.5, p, E_GRID)
    assert not res.convex
    assert np.all(res.second_differences < 0)


def test_barrier_payoff_cliff_is_not_convex():
    v = np.full(2**8 + 1, 1.2)
    p = SampledPath.uniform(1.0, v)
    res = vertical_convexity_check(UpOutCall(1.0, 1.3), 0.5, p, E_GRID)
    assert not res.convex
    knocked = SampledPath.uniform(1.0, np.full(2**8 + 1, 1.35))
    res = vertical_convexity_check(UpOutCall(1.0, 1.3), 0.5, knocked, E_GRID)
    assert res.convex and np.all(res.profile == 0)


def test_convexity_grid_validated():
    p = gbm_path(0.2, 1.0, 4, 1)
    with pytest.raises(ValueError):
        vertical_convexity_check(ArithmeticAsianCall(1.0), 0.5, p, [0.0, 0.1, 0.3])


def test_report_json_and_batch_csv(tmp_path):
    paths = [gbm_path(0.2, 1.0, 10, s) for s in range(3)]
    P = DyadicPartitionSequence(1.0, 10)
    reps = hedge_batch(lambda p: call(0.25), paths, P, 10, 0.25)
    d = json.loads(reps[0].to_json())
    assert set(d) >= {"level", "direct_error", "formula_error", "verdict", "diagnostics", "initial_value"}
    assert len(json.loads(reps[0].to_json(include_paths=True))["gains"]) == 2**10 + 1
    out = tmp_path / "batch.csv"
    write_batch_csv(reps, out)
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 and rows[2]["path_id"] == "2"
    assert float(rows[1]["direct_error"]) == pytest.approx(reps[1].direct_error, rel=1e-10)


def test_european_value_initial_portfolio():
    p = gbm_path(0.2, 1.0, 8, 1)
    rep = simulate_delta_hedge(call(0.2), p, DyadicPartitionSequence(1.0, 8))
    assert rep.portfolio[0] == pytest.approx(float(european_value(BSModelSpec.constant(0.2, 1.0), 0.0, 1.0, 1.0)[0]))

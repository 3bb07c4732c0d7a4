import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathlab.paths import (
    DyadicPartitionSequence,
    GridMismatchError,
    SampledPath,
    continuous_qv,
    gbm_path,
    local_realized_vol,
    local_vol_curve,
    qv_approx,
    qv_curve,
    qv_gain_identity,
    qv_limit,
    read_path_csv,
    resample_uniform,
)


def test_flat_path_has_zero_qv():
    p = SampledPath.uniform(1.0, np.ones(2**6 + 1))
    est = qv_limit(p, DyadicPartitionSequence(1.0, 6))
    assert est.limit_estimate == 0.0
    assert est.converged


def test_linear_path_qv_vanishes_like_mesh():
    # omega(t) = t: A^n(1) = 2^n * (2^-n)^2 = 2^-n
    p = SampledPath.uniform(1.0, np.linspace(0, 1, 2**10 + 1), is_price=False)
    for n in range(1, 11):
        assert qv_approx(p, n, 1.0) == pytest.approx(2.0**-n, rel=1e-12)


def test_brownian_qv_close_to_horizon():
    rng = np.random.default_rng(3)
    n = 2**14
    w = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n) * math.sqrt(1 / n))])
    p = SampledPath.uniform(1.0, w, is_price=False)
    assert qv_curve(p, 14)[-1] == pytest.approx(1.0, abs=0.05)


def test_breakpoint_off_grid_raises():
    p = SampledPath(np.array([0.0, 0.3, 1.0]), np.array([1.0, 1.1, 1.2]))
    with pytest.raises(GridMismatchError):
        DyadicPartitionSequence(1.0, 2).indices(p, 2)


def test_partition_levels_are_nested():
    P = DyadicPartitionSequence(2.0, 6)
    for n in range(1, 6):
        assert set(P.breakpoints(n)) <= set(P.breakpoints(n + 1))
    assert P.mesh(6) == 2.0 / 64


@given(st.integers(0, 2**31 - 1), st.integers(1, 10), st.floats(0.0, 1.0))
def test_gain_identity_exact(seed, level, t):
    p = gbm_path(0.3, 1.0, 10, seed)
    a, rhs = qv_gain_identity(p, level, t)
    assert abs(a - rhs) <= 1e-10


@given(st.integers(0, 2**31 - 1), st.integers(1, 8), st.floats(0.05, 20.0))
def test_qv_scales_quadratically(seed, level, c):
    p = gbm_path(0.2, 1.0, 8, seed)
    assert qv_approx(p.scaled(c), level, 1.0) == pytest.approx(c * c * qv_approx(p, level, 1.0), rel=1e-10)


@given(st.integers(0, 2**31 - 1))
def test_qv_curve_nondecreasing(seed):
    a = qv_curve(gbm_path(0.25, 1.0, 9, seed), 9)
    assert np.all(np.diff(a) >= 0)


def test_local_realized_vol_on_gbm():
    p = gbm_path(0.2, 1.0, 14, 11)
    est = qv_limit(p, DyadicPartitionSequence(1.0, 14))
    v = local_realized_vol(est, p, 0.25, window=0.25)
    assert v == pytest.approx(0.2, rel=0.15)


def test_local_realized_vol_zero_on_flat():
    p = SampledPath.uniform(1.0, np.ones(2**8 + 1))
    est = qv_limit(p, DyadicPartitionSequence(1.0, 8))
    assert local_realized_vol(est, p, 0.5) == 0.0


def test_local_realized_vol_window_outside_horizon():
    p = SampledPath.uniform(1.0, np.ones(2**4 + 1))
    est = qv_limit(p, DyadicPartitionSequence(1.0, 4))
    with pytest.raises(ValueError):
        local_realized_vol(est, p, 0.99, window=0.1)


def test_local_vol_curve_constant_for_exponential_of_linear_qv():
    # omega with |d omega| = s * omega * sqrt(dt) each cell
    n = 2**8
    dt = 1 / n
    s = 0.3
    signs = np.where(np.arange(n) % 2, -1.0, 1.0)
    w = np.ones(n + 1)
    for i in range(n):
        w[i + 1] = w[i] * (1 + signs[i] * s * math.sqrt(dt))
    curve = local_vol_curve(SampledPath.uniform(1.0, w), 8)
    assert np.allclose(curve, s, rtol=1e-12)


def test_jump_is_removed_from_continuous_qv():
    v = np.ones(2**4 + 1)
    v[8:] = 1.2
    p = SampledPath.uniform(1.0, v, jumps={8: 1.0})
    total = qv_limit(p, DyadicPartitionSequence(1.0, 4)).limit_estimate
    assert total == pytest.approx(0.04)
    assert continuous_qv(total, p) == pytest.approx(0.0, abs=1e-15)


def test_csv_roundtrip_and_resampling(tmp_path):
    f = tmp_path / "p.csv"
    f.write_text("time,value,jump\n0,1,0\n0.3,1.1,0\n0.6,1.5,1\n1.0,1.4,0\n")
    p = read_path_csv(f, max_level=4)
    assert p.n_cells == 16
    assert p.at(0.5) == 1.1
    assert list(p.jumps.values()) == [1.1]
    assert p.values[-1] == 1.4


def test_resample_previous_tick():
    p = resample_uniform([0.0, 0.5, 1.0], [1.0, 2.0, 3.0], 2)
    assert list(p.values) == [1.0, 1.0, 2.0, 2.0, 3.0]


@pytest.mark.parametrize("bad", [np.array([1.0, -1.0]), np.array([1.0, np.nan])])
def test_invalid_price_paths_rejected(bad):
    with pytest.raises(ValueError):
        SampledPath(np.array([0.0, 1.0]), bad)

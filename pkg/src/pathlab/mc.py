"""Euler Monte Carlo for local Levy log-price dynamics.

Random numbers come from a Philox4x32-10 counter-based generator: the key is
the seed, the counter is (step, path index, lane), so any path can be
regenerated on its own and results do not depend on chunking or thread count.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.stats import norm

from .levy import CEV, LocalLevyModel, Merton, NoJumps, TaylorVol, VarianceGamma

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_INV32 = 1.0 / 4294967296.0

MAX_PATH_STEPS = 5 * 10**10
LOG_FLOOR = -50.0  # log-price below which the path is treated as absorbed at 0


class ResourceCapError(RuntimeError):
    pass


@nb.njit(cache=True, inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = np.uint64(c0) * _M0
        p1 = np.uint64(c2) * _M1
        hi0 = np.uint32(p0 >> np.uint64(32))
        lo0 = np.uint32(p0 & _MASK)
        hi1 = np.uint32(p1 >> np.uint64(32))
        lo1 = np.uint32(p1 & _MASK)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + _W0)
        k1 = np.uint32(k1 + _W1)
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def _u01(v):
    # open interval (0, 1)
    return (np.float64(v) + 0.5) * _INV32


@nb.njit(cache=True)
def philox_uniforms(seed, path, step, lane):
    k0 = np.uint32(seed & 0xFFFFFFFF)
    k1 = np.uint32((seed >> 32) & 0xFFFFFFFF)
    r = _philox(np.uint32(step), np.uint32(path & 0xFFFFFFFF), np.uint32(path >> 32), np.uint32(lane), k0, k1)
    return _u01(r[0]), _u01(r[1]), _u01(r[2]), _u01(r[3])


@nb.njit(cache=True, inline="always")
def _ndtri(p):
    # inverse normal cdf, Wichura AS241 (PPND16), ~1e-16 relative
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608) / (((((((5226.495278852545925 * r
                + 28729.085735721942674) * r + 39307.89580009271061) * r + 21213.794301586595867) * r
                + 5394.1960214247511077) * r + 687.1870074920579083) * r + 42.313330701600911252) * r + 1.0)
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
                + 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734) / (((((((1.05075007164441684324e-9 * r
                + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                + 0.68976733498510000455) * r + 1.6763848301838038494) * r + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
                + 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772) / (((((((2.04426310338993978564e-15 * r
                + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                + 0.0148753612908506148525) * r + 0.13692988092273580531) * r + 0.59983220655588793769) * r + 1.0)
    return -val if q < 0 else val


@nb.njit(cache=True)
def _gamma_sample(shape, seed, path, step, lane0):
    """Marsaglia-Tsang with the shape+1 boost for shape < 1; returns (value, next lane)."""
    boost = shape < 1.0
    a = shape + 1.0 if boost else shape
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    lane = lane0
    while True:
        u1, u3, u4, _ = philox_uniforms(seed, path, step, lane)
        lane += 1
        z = _ndtri(u1)
        v = 1.0 + c * z
        if v <= 0.0:
            continue
        v = v * v * v
        if math.log(u3) < 0.5 * z * z + d - d * v + d * math.log(v):
            g = d * v
            if boost:
                g *= u4 ** (1.0 / shape)
            return g, lane


@nb.njit(cache=True)
def _local_var(x, kind, p0, p1, coeffs, xbar):
    if kind == 0:
        return p0 * math.exp(p1 * x)
    d = x - xbar
    acc = coeffs[0]
    pw = 1.0
    for k in range(1, coeffs.shape[0]):
        pw *= d
        acc += 2.0 * coeffs[k] * pw
    return acc if acc > 0.0 else 0.0


@nb.njit(cache=True, inline="always")
def _step(x, z, zj, nj, g, r0, dt, sqdt, vol_kind, vp0, vp1, vcoeffs, vxbar, jump_kind, j1, j2):
    a = _local_var(x, vol_kind, vp0, vp1, vcoeffs, vxbar)
    xn = x + (r0 - 0.5 * a) * dt + math.sqrt(a) * sqdt * z
    if jump_kind == 1 and nj > 0:
        xn += nj * j1 + math.sqrt(nj) * j2 * zj
    elif jump_kind == 2:
        xn += j1 * g + j2 * math.sqrt(g) * zj
    return xn


@nb.njit(cache=True)
def _simulate_kernel(
    n_paths, x0, r0, dt, record_steps, seed, antithetic,
    vol_kind, vp0, vp1, vcoeffs, vxbar,
    jump_kind, j0, j1, j2,
):
    n_rec = record_steps.shape[0]
    n_steps = record_steps[n_rec - 1]
    out = np.empty((n_paths, n_rec))
    jumps_seen = np.zeros(n_paths, dtype=np.int64)
    sqdt = math.sqrt(dt)
    lam_dt = j0 * dt
    p_zero = math.exp(-lam_dt)
    width = 2 if antithetic else 1
    n_streams = n_paths // width
    for stream in range(n_streams):
        # antithetic partner (path 2i+1) reuses the draws of path 2i with normals negated
        pa = stream * width
        pb = pa + 1
        xa = x0
        xb = x0
        rec = 0
        for k in range(n_steps):
            u1, u2, u3, _ = philox_uniforms(seed, stream, k, 0)
            z = _ndtri(u1)
            zj = 0.0
            nj = 0
            g = 0.0
            if jump_kind == 1:
                # Poisson count by inversion, compound Gaussian size
                if u3 > p_zero:
                    prob = p_zero
                    cdf = p_zero
                    while u3 > cdf and nj < 100:
                        nj += 1
                        prob *= lam_dt / nj
                        cdf += prob
                    zj = _ndtri(u2)
                    jumps_seen[pa] += nj
                    if antithetic:
                        jumps_seen[pb] += nj
            elif jump_kind == 2:
                # variance gamma: Brownian motion run on a gamma clock, exact in law
                g, _ = _gamma_sample(dt / j0, seed, stream, k, 1)
                g *= j0
                zj = _ndtri(u2)
            if xa > LOG_FLOOR:
                xa = _step(xa, z, zj, nj, g, r0, dt, sqdt, vol_kind, vp0, vp1, vcoeffs, vxbar, jump_kind, j1, j2)
            if antithetic and xb > LOG_FLOOR:
                xb = _step(xb, -z, -zj, nj, g, r0, dt, sqdt, vol_kind, vp0, vp1, vcoeffs, vxbar, jump_kind, j1, j2)
            while rec < n_rec and record_steps[rec] == k + 1:
                out[pa, rec] = xa if xa > LOG_FLOOR else -np.inf
                if antithetic:
                    out[pb, rec] = xb if xb > LOG_FLOOR else -np.inf
                rec += 1
    return out, jumps_seen


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 100_000
    steps_per_year: int = 250
    seed: int = 1
    antithetic: bool = True
    horizon: float = 1.0
    max_path_steps: int = MAX_PATH_STEPS

    def __post_init__(self):
        if self.n_paths < 1 or self.steps_per_year < 1:
            raise ValueError("n_paths and steps_per_year must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even number of paths")


@dataclass(frozen=True)
class Ensemble:
    """Log-prices X(T_j) for each path and recorded maturity."""

    maturities: np.ndarray
    x: np.ndarray
    jump_counts: np.ndarray
    antithetic: bool

    def pair_means(self, values: np.ndarray) -> np.ndarray:
        """Collapse antithetic pairs so samples are independent."""
        if not self.antithetic:
            return values
        return 0.5 * (values[0::2] + values[1::2])


def _model_args(model: LocalLevyModel):
    lv = model.local_vol
    if isinstance(lv, CEV):
        vol = (0, lv.sigma0**2, 2.0 * (lv.beta - 1.0), np.zeros(1), 0.0)
    elif isinstance(lv, TaylorVol):
        vol = (1, 0.0, 0.0, np.asarray(lv.coeffs, dtype=float), lv.xbar)
    else:
        raise TypeError(f"unsupported local volatility {lv!r}")
    j = model.jumps
    if isinstance(j, Merton):
        jump = (1, j.lam, j.m, j.delta)
    elif isinstance(j, VarianceGamma):
        jump = (2, j.kappa, j.theta, j.rho)
    elif isinstance(j, NoJumps):
        jump = (0, 0.0, 0.0, 0.0)
    else:
        raise TypeError(f"unsupported jumps {j!r}")
    return vol, jump


def simulate(model: LocalLevyModel, cfg: MCConfig, x0: float = 0.0, maturities=None) -> Ensemble:
    """Euler scheme on X with exact jump increments, recording X at each maturity."""
    mats = np.atleast_1d(np.asarray(cfg.horizon if maturities is None else maturities, dtype=float))
    mats = np.sort(mats)
    steps = np.maximum(1, np.round(mats * cfg.steps_per_year).astype(np.int64))
    if cfg.n_paths * int(steps[-1]) > cfg.max_path_steps:
        raise ResourceCapError("n_paths x steps exceeds the configured budget")
    # one grid for all maturities: dt = 1/steps_per_year
    dt = 1.0 / cfg.steps_per_year
    vol, jump = _model_args(model)
    threads = os.environ.get("PATHLAB_THREADS")
    if threads:
        nb.set_num_threads(max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS)))
    x, counts = _simulate_kernel(
        cfg.n_paths, float(x0), model.r0, dt, steps, np.uint64(cfg.seed), cfg.antithetic, *vol, *jump
    )
    return Ensemble(steps * dt, x, counts, cfg.antithetic)


@dataclass(frozen=True)
class MCPrice:
    price: float
    se: float
    ci95: tuple[float, float]
    ci99: tuple[float, float]


def _summary(samples: np.ndarray) -> MCPrice:
    n = samples.size
    mean = math.fsum(samples) / n
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    z95, z99 = norm.ppf(0.975), norm.ppf(0.995)
    return MCPrice(mean, se, (mean - z95 * se, mean + z95 * se), (mean - z99 * se, mean + z99 * se))


def mc_price(model: LocalLevyModel, payoff, cfg: MCConfig, S0: float = 1.0, maturity: float | None = None) -> MCPrice:
    """Discounted mean of payoff(S(T)) with standard error and confidence intervals."""
    T = cfg.horizon if maturity is None else maturity
    ens = simulate(model, cfg, math.log(S0), [T])
    s = np.exp(ens.x[:, 0])
    disc = math.exp(-model.r * ens.maturities[0])
    return _summary(ens.pair_means(disc * np.asarray(payoff(s), dtype=float)))


def call_prices(ens: Ensemble, r: float, strikes_by_maturity: dict[float, list[float]]) -> dict[tuple[float, float], MCPrice]:
    """Call prices for several strikes per recorded maturity from one ensemble."""
    out = {}
    for j, T in enumerate(ens.maturities):
        key = min(strikes_by_maturity, key=lambda m: abs(m - T))
        s = np.exp(ens.x[:, j])
        disc = math.exp(-r * T)
        for K in strikes_by_maturity[key]:
            out[key, K] = _summary(ens.pair_means(disc * np.maximum(s - K, 0.0)))
    return out


def empirical_charfun(model: LocalLevyModel, cfg: MCConfig, xi, x0: float = 0.0, maturity: float | None = None):
    """Sample mean of exp(i xi X(T)) and its standard error per xi."""
    T = cfg.horizon if maturity is None else maturity
    ens = simulate(model, cfg, x0, [T])
    x = ens.x[:, 0]
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    means = np.empty(xi.size, dtype=complex)
    ses = np.empty(xi.size)
    for i, v in enumerate(xi):
        e = ens.pair_means(np.exp(1j * v * np.where(np.isfinite(x), x, 0.0)) * np.isfinite(x))
        means[i] = e.mean()
        ses[i] = math.sqrt((np.var(e.real, ddof=1) + np.var(e.imag, ddof=1)) / e.size)
    return means, ses


def write_paths_csv(path, ens_times: np.ndarray, values: np.ndarray) -> None:
    """Stream a (paths x times) array as `path_id,time,value` rows."""
    with open(path, "w") as fh:
        fh.write("path_id,time,value\n")
        for pid, row in enumerate(values):
            for t, v in zip(ens_times, row):
                fh.write(f"{pid},{t:.10g},{v:.17g}\n")


@nb.njit(cache=True)
def _bs_functionals_kernel(n_paths, s0, sig, dt, seed, barrier, fix_steps):
    """Exact log-normal steps; per path: S(T), trapezoid averages of S and log S,
    Brownian-bridge survival probability below the barrier, and fixings."""
    n_steps = sig.shape[0]
    n_fix = fix_steps.shape[0]
    out = np.empty((n_paths, 4 + n_fix))
    ls0 = math.log(s0)
    lb = math.log(barrier) if barrier > 0 else np.inf
    for pair in range(n_paths // 2):
        for side in range(2):
            p = 2 * pair + side
            sign = 1.0 - 2.0 * side
            x = ls0
            arith = 0.0
            geo = 0.0
            surv = 1.0 if x < lb else 0.0
            f = 0
            for k in range(n_steps):
                u1, _, _, _ = philox_uniforms(seed, pair, k, 0)
                v = sig[k] * sig[k] * dt
                xn = x - 0.5 * v + sign * math.sqrt(v) * _ndtri(u1)
                arith += 0.5 * (math.exp(x) + math.exp(xn)) * dt
                geo += 0.5 * (x + xn) * dt
                if surv > 0.0:
                    if xn >= lb:
                        surv = 0.0
                    elif v > 0.0:
                        surv *= 1.0 - math.exp(-2.0 * (lb - x) * (lb - xn) / v)
                x = xn
                while f < n_fix and fix_steps[f] == k + 1:
                    out[p, 4 + f] = math.exp(x)
                    f += 1
            out[p, 0] = math.exp(x)
            out[p, 1] = arith
            out[p, 2] = geo
            out[p, 3] = surv
    return out


@dataclass(frozen=True)
class BSPathSample:
    """Antithetic pairs (2i, 2i+1); integrals are over [0, T], not averages."""

    terminal: np.ndarray
    integral: np.ndarray
    log_integral: np.ndarray
    survival: np.ndarray
    fixings: np.ndarray

    def summary(self, payoff_values: np.ndarray) -> "MCPrice":
        v = np.asarray(payoff_values, dtype=float)
        return _summary(0.5 * (v[0::2] + v[1::2]))


def bs_path_functionals(sigma_fn, T: float, n_paths: int, steps: int, seed: int, S0: float = 1.0, barrier: float = 0.0, fixings=()) -> BSPathSample:
    """Driftless GBM with sigma(t) sampled at step midpoints; fixings must lie on the step grid."""
    if n_paths % 2:
        raise ValueError("n_paths must be even (antithetic pairs)")
    dt = T / steps
    mid = (np.arange(steps) + 0.5) * dt
    sig = np.asarray(sigma_fn(mid), dtype=float) * np.ones(steps)
    fix = np.round(np.asarray(fixings, dtype=float) / dt).astype(np.int64)
    if fix.size and np.any(np.abs(fix * dt - np.asarray(fixings)) > 1e-9):
        raise ValueError("fixing dates must be multiples of T/steps")
    out = _bs_functionals_kernel(n_paths, float(S0), sig, dt, np.uint64(seed), float(barrier), fix)
    return BSPathSample(out[:, 0], out[:, 1], out[:, 2], out[:, 3], out[:, 4:])

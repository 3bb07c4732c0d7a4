"""Pricing functionals under Black-Scholes with piecewise-constant volatility.

Forward convention throughout: r = 0, prices are forward prices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded
from scipy.special import ndtr

from .functional import NonAnticipativeFunctional, StoppedPath


class DomainError(ValueError):
    pass


class DimensionCapError(ValueError):
    pass


def _npdf(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class BSModelSpec:
    """sigma(t) = sigmas[i] on [breaks[i], breaks[i+1]); breaks[0] = 0."""

    sigmas: tuple[float, ...]
    horizon: float
    breaks: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in np.atleast_1d(self.sigmas)))
        object.__setattr__(self, "breaks", tuple(float(b) for b in np.atleast_1d(self.breaks)))
        if len(self.sigmas) != len(self.breaks):
            raise ValueError("one sigma per break")
        if self.breaks[0] != 0.0 or any(b >= c for b, c in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breaks must start at 0 and increase")
        if min(self.sigmas) < 0:
            raise ValueError("volatility must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @classmethod
    def constant(cls, sigma: float, horizon: float) -> "BSModelSpec":
        return cls((sigma,), horizon)

    @property
    def sigma_max(self) -> float:
        return max(self.sigmas)

    def sigma_at(self, t):
        i = np.searchsorted(np.asarray(self.breaks), np.asarray(t, dtype=float), side="right") - 1
        return np.asarray(self.sigmas)[np.clip(i, 0, len(self.sigmas) - 1)]

    def _pieces(self):
        ends = list(self.breaks[1:]) + [math.inf]
        return zip(self.breaks, ends, self.sigmas)

    def variance(self, t, u=None):
        """A(t, u) = int_t^u sigma^2 ds, u defaulting to the horizon."""
        u = self.horizon if u is None else u
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(t, u).shape)
        for a, b, s in self._pieces():
            lo = np.maximum(a, t)
            hi = np.minimum(b, u)
            out += s * s * np.maximum(hi - lo, 0.0)
        return out

    def moment(self, t, p: int):
        """int_t^T (T - s)^p sigma(s)^2 ds."""
        T = self.horizon
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for a, b, s in self._pieces():
            lo = np.maximum(a, t)
            hi = np.minimum(b, T)
            seg = (np.maximum(T - lo, 0.0) ** (p + 1) - np.maximum(T - hi, 0.0) ** (p + 1)) / (p + 1)
            out += s * s * np.where(hi > lo, seg, 0.0)
        return out


# payoff declarations


@dataclass(frozen=True)
class EuropeanCall:
    K: float

    def payoff(self, sp: StoppedPath):
        return np.maximum(sp.current - self.K, 0.0)


@dataclass(frozen=True)
class EuropeanPut:
    K: float

    def payoff(self, sp: StoppedPath):
        return np.maximum(self.K - sp.current, 0.0)


@dataclass(frozen=True)
class GeometricAsianCall:
    K: float

    def payoff(self, sp: StoppedPath):
        return np.maximum(np.exp(sp.log_integral() / sp.time) - self.K, 0.0)


@dataclass(frozen=True)
class ArithmeticAsianCall:
    K: float

    def payoff(self, sp: StoppedPath):
        return np.maximum(sp.integral() / sp.time - self.K, 0.0)


@dataclass(frozen=True)
class UpOutCall:
    K: float
    U: float

    def payoff(self, sp: StoppedPath):
        return np.where(sp.running_max() < self.U, np.maximum(sp.current - self.K, 0.0), 0.0)


@dataclass(frozen=True, eq=False)
class DiscreteMonitor:
    """h(S(t_1), ..., S(t_n)); dh and d2h (gradient, Hessian in the fixings) are optional."""

    dates: tuple[float, ...]
    h: Callable[[np.ndarray], np.ndarray]
    dh: Callable[[np.ndarray], np.ndarray] | None = None
    d2h: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        d = tuple(float(x) for x in self.dates)
        if not d or d[0] <= 0 or any(a >= b for a, b in zip(d, d[1:])):
            raise ValueError("monitor dates must be strictly increasing in (0, T]")
        object.__setattr__(self, "dates", d)

    def payoff(self, sp: StoppedPath):
        fix = np.stack([np.broadcast_to(sp.value_at(d), np.shape(sp.current)) for d in self.dates], axis=-1)
        return self.h(fix)


# European


def european_value(model: BSModelSpec, t, S, K: float, kind: str = "call"):
    """Black formula on A(t, T); returns (value, delta, gamma, theta)."""
    t = np.asarray(t, dtype=float)
    S = np.asarray(S, dtype=float)
    if np.any(t > model.horizon + 1e-12):
        raise DomainError("t > T")
    if np.any(S <= 0):
        raise DomainError("S must be positive")
    A = model.variance(t)
    live = A > 0
    sd = np.sqrt(np.where(live, A, 1.0))
    d1 = (np.log(S / K) + 0.5 * A) / sd
    d2 = d1 - sd
    call = S * ndtr(d1) - K * ndtr(d2)
    delta = ndtr(d1)
    gamma = _npdf(d1) / (S * sd)
    if kind == "put":
        call = call - (S - K)
        delta = delta - 1.0
    elif kind != "call":
        raise ValueError(f"unknown kind {kind!r}")
    intrinsic = np.maximum(S - K, 0.0) if kind == "call" else np.maximum(K - S, 0.0)
    itm = (S > K) if kind == "call" else -(S < K).astype(float)
    value = np.where(live, call, intrinsic)
    delta = np.where(live, delta, itm * 1.0)
    gamma = np.where(live, gamma, 0.0)
    theta = -0.5 * model.sigma_at(t) ** 2 * S * S * gamma
    return value, delta, gamma, theta


class EuropeanFunctional(NonAnticipativeFunctional):
    def __init__(self, model: BSModelSpec, payoff: EuropeanCall | EuropeanPut):
        self.model = model
        self.K = payoff.K
        self.kind = "put" if isinstance(payoff, EuropeanPut) else "call"
        self.name = f"european-{self.kind}"

    def value(self, sp):
        return european_value(self.model, sp.time, sp.current, self.K, self.kind)[0]

    def greeks(self, sp):
        _, d, g, th = european_value(self.model, sp.time, sp.current, self.K, self.kind)
        return d, g, th


# geometric Asian


def geometric_asian_value(model: BSModelSpec, payoff: GeometricAsianCall, sp: StoppedPath):
    """Returns (value, grad_v, hess_v, horiz)."""
    T = model.horizon
    t = np.asarray(sp.time, dtype=float)
    if np.any(t > T + 1e-12):
        raise DomainError("t > T")
    x = sp.current
    g = sp.log_integral()
    K = payoff.K
    c = (T - t) / T
    m = (g + (T - t) * np.log(x) - 0.5 * model.moment(t, 1)) / T
    v = model.moment(t, 2) / T**2
    live = v > 0
    sd = np.sqrt(np.where(live, v, 1.0))
    d1 = (m + v - math.log(K)) / sd
    d2 = d1 - sd
    fwd = np.exp(m + 0.5 * v)
    e1 = np.where(live, fwd * ndtr(d1), np.where(np.exp(m) > K, np.exp(m), 0.0))
    value = np.where(live, fwd * ndtr(d1) - K * ndtr(d2), np.maximum(np.exp(m) - K, 0.0))
    vmm = e1 + np.where(live, fwd * _npdf(d1) / sd, 0.0)
    grad = c * e1 / x
    hess = c / x**2 * (c * vmm - e1)
    s2 = model.sigma_at(t) ** 2
    horiz = 0.5 * s2 * c * e1 - 0.5 * s2 * c * c * vmm
    return value, grad, hess, horiz


class GeometricAsianFunctional(NonAnticipativeFunctional):
    name = "geometric-asian-call"

    def __init__(self, model: BSModelSpec, payoff: GeometricAsianCall):
        self.model = model
        self.payoff = payoff

    def value(self, sp):
        return geometric_asian_value(self.model, self.payoff, sp)[0]

    def greeks(self, sp):
        return geometric_asian_value(self.model, self.payoff, sp)[1:]


# discretely monitored


def _gh_nodes(dim: int):
    n = {0: 1, 1: 40, 2: 40, 3: 20, 4: 12}[dim]
    z, w = hermegauss(n)
    return z, w / math.sqrt(2 * math.pi)


def _monitor_single(model: BSModelSpec, payoff: DiscreteMonitor, sp: StoppedPath, max_dim: int = 4):
    t = float(sp.time)
    x = float(sp.current)
    dates = np.asarray(payoff.dates)
    past = dates < t
    future = dates > t
    dim = int(future.sum())
    if dim > max_dim:
        raise DimensionCapError(f"{dim} remaining fixings exceed the cap of {max_dim}")
    n = dates.size
    fixed = np.array([float(sp.value_at(d)) if p else 0.0 for d, p in zip(dates, past)])
    z, w = _gh_nodes(dim)
    grid = np.array(list(itertools.product(z, repeat=dim)), dtype=float).reshape(len(z) ** dim, dim)
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim)), dtype=float).reshape(len(w) ** dim, dim), axis=1)
    fut = dates[future]
    dA = np.diff(np.concatenate([[0.0], np.array([float(model.variance(t, u)) for u in fut])]))
    logs = np.cumsum(grid * np.sqrt(dA), axis=1) - 0.5 * np.cumsum(dA)
    ratios = np.ones((grid.shape[0], n))
    ratios[:, future] = np.exp(logs)
    live = ~past
    X = np.where(live, x * ratios, fixed)
    value = float(weights @ payoff.h(X))
    if payoff.dh is not None:
        grad = float(weights @ np.sum(np.where(live, payoff.dh(X) * ratios, 0.0), axis=1))
        if payoff.d2h is not None:
            R = np.where(live, ratios, 0.0)
            hess = float(weights @ np.einsum("qi,qij,qj->q", R, payoff.d2h(X), R))
        else:
            hess = None
    else:
        grad = hess = None
    return value, grad, hess


def discrete_monitor_value(model: BSModelSpec, payoff: DiscreteMonitor, sp: StoppedPath, bump_rel: float = 1e-4):
    """Tensor Gauss-Hermite expectation over the remaining fixings; (value, grad_v, hess_v, horiz)."""
    times = np.atleast_1d(sp.time)
    cur = np.atleast_1d(sp.current)
    idx = np.atleast_1d(sp.index)
    out = np.zeros((4, times.size))
    for k in range(times.size):
        one = StoppedPath(sp.base, idx[k], times[k], cur[k])
        v, g, h = _monitor_single(model, payoff, one)
        if g is None or h is None:
            e = bump_rel * max(1.0, abs(cur[k]))
            up = _monitor_single(model, payoff, one.bump(e))[0]
            dn = _monitor_single(model, payoff, one.bump(-e))[0]
            g = (up - dn) / (2 * e) if g is None else g
            h = (up - 2 * v + dn) / (e * e) if h is None else h
        out[:, k] = v, g, h, -0.5 * float(model.sigma_at(times[k])) ** 2 * cur[k] ** 2 * h
    shape = np.shape(sp.current)
    return tuple(o.reshape(shape) for o in out)


class DiscreteMonitorFunctional(NonAnticipativeFunctional):
    name = "discrete-monitor"

    def __init__(self, model: BSModelSpec, payoff: DiscreteMonitor):
        self.model = model
        self.payoff = payoff

    def value(self, sp):
        times = np.atleast_1d(sp.time)
        cur = np.atleast_1d(sp.current)
        idx = np.atleast_1d(sp.index)
        vals = [_monitor_single(self.model, self.payoff, StoppedPath(sp.base, i, t, c))[0] for i, t, c in zip(idx, times, cur)]
        return np.asarray(vals).reshape(np.shape(sp.current))

    def greeks(self, sp):
        return discrete_monitor_value(self.model, self.payoff, sp)[1:]


# arithmetic Asian: (t, x, a) Cauchy problem


def _lagrange4(f: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Cubic Lagrange interpolation of rows of f at fractional column positions."""
    n = f.shape[1]
    j = np.clip(np.floor(pos).astype(np.int64), 1, n - 3)
    s = pos - j
    rows = np.arange(f.shape[0])[:, None]
    fm, f0, f1, f2 = (f[rows, j + o] for o in (-1, 0, 1, 2))
    return (
        -s * (s - 1) * (s - 2) / 6 * fm
        + (s + 1) * (s - 1) * (s - 2) / 2 * f0
        - (s + 1) * s * (s - 2) / 2 * f1
        + (s + 1) * s * (s - 1) / 6 * f2
    )


@dataclass(frozen=True, eq=False)
class ArithmeticAsianGrid:
    """Strang splitting: semi-Lagrangian (upwind) transport in a, Crank-Nicolson diffusion in x.

    For a >= K T the value is exactly (a + (T - t) x)/T - K."""

    model: BSModelSpec
    K: float
    S_ref: float = 1.0
    nx: int = 200
    na: int = 200
    nt: int = 200
    x_mult: float | None = None

    def exact(self, t, x, a):
        return (a + (self.model.horizon - t) * x) / self.model.horizon - self.K

    @cached_property
    def x_grid(self):
        T = self.model.horizon
        mult = self.x_mult or max(4.0, math.exp(6 * self.model.sigma_max * math.sqrt(T)))
        return np.linspace(0.0, mult * self.S_ref, self.nx + 1)

    @cached_property
    def solution(self):
        if self.K <= 0:
            raise DomainError("use the exact formula for K <= 0")
        T = self.model.horizon
        x = self.x_grid
        dt = T / self.nt
        kt = self.K * T
        da = kt / self.na
        extra = int(math.ceil(x[-1] * dt / da)) + 4
        a = da * np.arange(self.na + 1 + extra)
        times = np.linspace(0.0, T, self.nt + 1)
        f = np.maximum(a[None, :] / T - self.K, 0.0) + 0 * x[:, None]
        exact_cols = a >= kt
        slices = np.empty((self.nt + 1, x.size, a.size))
        slices[-1] = f
        dx = x[1] - x[0]
        xi = x[1:-1]

        def transport(g, s, h):
            # g at time s, shift characteristics back over h: g(a + x h)
            pos = (a[None, :] + x[:, None] * h) / da
            out = _lagrange4(g, pos)
            beyond = pos > a.size - 3
            out = np.where(beyond, self.exact(s, x[:, None], a[None, :] + x[:, None] * h), out)
            out[:, exact_cols] = self.exact(s - h, x[:, None], a[None, exact_cols])
            return out

        for n in range(self.nt - 1, -1, -1):
            tn, tn1 = times[n], times[n + 1]
            g = transport(f, tn1, 0.5 * dt)
            sig2 = float(self.model.sigma_at(0.5 * (tn + tn1))) ** 2
            lam = 0.5 * sig2 * xi**2 / dx**2 * 0.5 * dt
            ab = np.zeros((3, xi.size))
            ab[0, 1:] = -lam[:-1]
            ab[1] = 1 + 2 * lam
            ab[2, :-1] = -lam[1:]
            rhs = g[1:-1] + lam[:, None] * (g[2:] - 2 * g[1:-1] + g[:-2])
            rhs[0] += lam[0] * g[0]
            rhs[-1] += lam[-1] * g[-1]
            h = g.copy()
            h[1:-1] = solve_banded((1, 1), ab, rhs)
            f = transport(h, tn1 - 0.5 * dt, 0.5 * dt)
            slices[n] = f
        return times, a, slices

    @cached_property
    def interpolator(self):
        times, a, slices = self.solution
        return RegularGridInterpolator((times, self.x_grid, a), slices, bounds_error=False, fill_value=None)

    def __call__(self, t, x, a):
        t, x, a = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(a, float))
        if self.K <= 0:
            return self.exact(t, x, a)
        inside = (a < self.K * self.model.horizon) & (x <= self.x_grid[-1])
        pts = np.stack([t, np.minimum(x, self.x_grid[-1]), a], axis=-1)
        grid_val = self.interpolator(pts).reshape(t.shape)
        return np.where(inside, grid_val, np.maximum(self.exact(t, x, a), grid_val))


def arithmetic_asian_value(model: BSModelSpec, payoff: ArithmeticAsianCall, sp: StoppedPath, grid: ArithmeticAsianGrid | None = None):
    T = model.horizon
    if np.any(np.asarray(sp.time) > T + 1e-12):
        raise DomainError("t > T")
    a = sp.integral()
    if payoff.K <= 0:
        return (a + (T - sp.time) * sp.current) / T - payoff.K
    if grid is None:
        grid = ArithmeticAsianGrid(model, payoff.K, S_ref=float(sp.base.values[0]))
    at_end = np.asarray(sp.time) >= T - 1e-14
    return np.where(at_end, np.maximum(a / T - payoff.K, 0.0), grid(sp.time, sp.current, a))


class ArithmeticAsianFunctional(NonAnticipativeFunctional):
    name = "arithmetic-asian-call"

    def __init__(self, model: BSModelSpec, payoff: ArithmeticAsianCall, S_ref: float = 1.0, **grid_kw):
        self.model = model
        self.payoff = payoff
        self.grid = ArithmeticAsianGrid(model, payoff.K, S_ref=S_ref, **grid_kw) if payoff.K > 0 else None

    def value(self, sp):
        return arithmetic_asian_value(self.model, self.payoff, sp, self.grid)


# up-and-out barrier


@dataclass(frozen=True, eq=False)
class BarrierGrid:
    """Crank-Nicolson in z = log S on (log U - width, log U), Rannacher start-up."""

    model: BSModelSpec
    K: float
    U: float
    nz: int = 400
    nt: int = 400
    width: float | None = None

    @cached_property
    def z(self):
        w = self.width or max(8 * self.model.sigma_max * math.sqrt(self.model.horizon), math.log(self.U / self.K) + 1.0)
        return np.linspace(math.log(self.U) - w, math.log(self.U), self.nz + 1)

    @cached_property
    def solution(self):
        T = self.model.horizon
        z = self.z
        dz = z[1] - z[0]
        S = np.exp(z)
        times = np.linspace(0.0, T, self.nt + 1)
        f = np.where(S < self.U, np.maximum(S - self.K, 0.0), 0.0)
        f[-1] = 0.0
        out = np.empty((self.nt + 1, z.size))
        out[-1] = f
        m = z.size - 2

        def step(f, dt, sig2, theta):
            # operator L f = 1/2 sig2 (f_zz - f_z), Dirichlet zeros at both ends
            lo = 0.5 * sig2 * (1 / dz**2 + 0.5 / dz)
            di = -sig2 / dz**2
            up = 0.5 * sig2 * (1 / dz**2 - 0.5 / dz)
            ab = np.zeros((3, m))
            ab[0, 1:] = -theta * dt * up
            ab[1] = 1 - theta * dt * di
            ab[2, :-1] = -theta * dt * lo
            fi = f[1:-1]
            lf = di * fi
            lf[1:] += lo * fi[:-1]
            lf[:-1] += up * fi[1:]
            g = np.zeros_like(f)
            g[1:-1] = solve_banded((1, 1), ab, fi + (1 - theta) * dt * lf)
            return g

        for n in range(self.nt - 1, -1, -1):
            dt = times[n + 1] - times[n]
            sig2 = float(self.model.sigma_at(0.5 * (times[n] + times[n + 1]))) ** 2
            if n >= self.nt - 2:
                # Rannacher: two implicit half-steps for each of the first two steps
                f = step(step(f, 0.5 * dt, sig2, 1.0), 0.5 * dt, sig2, 1.0)
            else:
                f = step(f, dt, sig2, 0.5)
            out[n] = f
        fz = np.gradient(out, dz, axis=1)
        fzz = np.gradient(fz, dz, axis=1)
        delta = fz / S
        gamma = (fzz - fz) / S**2
        return times, out, delta, gamma

    def __call__(self, t, S):
        """(value, delta, gamma) by linear interpolation of the grid in (t, z); zero at or above U."""
        times, v, d, g = self.solution
        t, S = np.broadcast_arrays(np.asarray(t, float), np.asarray(S, float))
        zq = np.log(np.maximum(S, 1e-300))
        alive = S < self.U
        res = []
        for arr in (v, d, g):
            interp = RegularGridInterpolator((times, self.z), arr, bounds_error=False, fill_value=0.0)
            pts = np.stack([np.clip(t, 0, times[-1]), np.clip(zq, self.z[0], self.z[-1])], axis=-1)
            val = interp(pts).reshape(t.shape)
            res.append(np.where(alive & (zq >= self.z[0]), val, 0.0))
        return tuple(res)


def barrier_value_fd(model: BSModelSpec, payoff: UpOutCall, t, S, grid: BarrierGrid | None = None):
    if np.any(np.asarray(t) > model.horizon + 1e-12):
        raise DomainError("t > T")
    grid = grid or BarrierGrid(model, payoff.K, payoff.U)
    return grid(t, S)


class BarrierFunctional(NonAnticipativeFunctional):
    name = "up-and-out-call"

    def __init__(self, model: BSModelSpec, payoff: UpOutCall, **grid_kw):
        self.model = model
        self.payoff = payoff
        self.grid = BarrierGrid(model, payoff.K, payoff.U, **grid_kw)

    def _knocked(self, sp):
        return sp.running_max() >= self.payoff.U

    def value(self, sp):
        at_end = np.asarray(sp.time) >= self.model.horizon - 1e-14
        v = np.where(at_end, np.maximum(sp.current - self.payoff.K, 0.0), self.grid(sp.time, sp.current)[0])
        return np.where(self._knocked(sp), 0.0, v)

    def greeks(self, sp):
        _, d, g = self.grid(sp.time, sp.current)
        k = self._knocked(sp)
        d = np.where(k, 0.0, d)
        g = np.where(k, 0.0, g)
        return d, g, -0.5 * self.model.sigma_at(sp.time) ** 2 * sp.current**2 * g


def pricing_functional(model: BSModelSpec, payoff, **kw) -> NonAnticipativeFunctional:
    if isinstance(payoff, (EuropeanCall, EuropeanPut)):
        return EuropeanFunctional(model, payoff)
    if isinstance(payoff, GeometricAsianCall):
        return GeometricAsianFunctional(model, payoff)
    if isinstance(payoff, ArithmeticAsianCall):
        return ArithmeticAsianFunctional(model, payoff, **kw)
    if isinstance(payoff, UpOutCall):
        return BarrierFunctional(model, payoff, **kw)
    if isinstance(payoff, DiscreteMonitor):
        return DiscreteMonitorFunctional(model, payoff)
    raise TypeError(f"unsupported payoff {payoff!r}")

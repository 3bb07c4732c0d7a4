"""Sampled paths, nested dyadic partitions and quadratic variation along them."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """A partition breakpoint is not a node of the path's time grid."""


@dataclass(frozen=True, eq=False)
class SampledPath:
    """A path observed on a time grid; between nodes it is held constant (previous tick).

    `jumps` maps grid index -> left-limit value omega(t-) at that node."""

    times: np.ndarray
    values: np.ndarray
    jumps: dict[int, float] = field(default_factory=dict)
    is_price: bool = True

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("times and values must be 1-d arrays of equal length >= 2")
        if t[0] != 0.0:
            raise ValueError("paths start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        if self.is_price and np.any(v <= 0):
            raise ValueError("price paths must be strictly positive")
        for i, left in self.jumps.items():
            if not 0 < i < t.size:
                raise ValueError(f"jump mark {i} is not an interior grid index")
            if left == v[i]:
                raise ValueError(f"left limit at jump mark {i} equals the value")

    @classmethod
    def uniform(cls, T: float, values, jumps=None, is_price=True) -> "SampledPath":
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(0.0, T, values.size), values, dict(jumps or {}), is_price)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_cells(self) -> int:
        return self.times.size - 1

    def index_of(self, t) -> np.ndarray:
        """Grid indices of the given times; raises if any is not a grid node."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.times, t), 0, self.times.size - 1)
        lo = np.clip(idx - 1, 0, None)
        idx = np.where(np.abs(self.times[lo] - t) < np.abs(self.times[idx] - t), lo, idx)
        scale = max(1.0, self.horizon)
        if np.any(np.abs(self.times[idx] - t) > 1e-9 * scale):
            raise GridMismatchError("partition breakpoint absent from the path grid")
        return idx

    def at(self, t) -> np.ndarray:
        """omega(t) with previous-tick interpolation."""
        i = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(i, 0, self.values.size - 1)]

    def left_values(self) -> np.ndarray:
        """omega(t_i-) at every node (equal to omega(t_i) off jump marks)."""
        out = self.values.copy()
        for i, left in self.jumps.items():
            out[i] = left
        return out

    def scaled(self, c: float) -> "SampledPath":
        return SampledPath(self.times, c * self.values, {i: c * v for i, v in self.jumps.items()}, self.is_price)

    @cached_property
    def cum_integral(self) -> np.ndarray:
        """Left-point integral of omega from 0 to each node."""
        return np.concatenate([[0.0], np.cumsum(self.values[:-1] * np.diff(self.times))])

    @cached_property
    def cum_log_integral(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(np.log(self.values[:-1]) * np.diff(self.times))])

    @cached_property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.values)


@dataclass(frozen=True)
class DyadicPartitionSequence:
    horizon: float
    max_level: int

    def __post_init__(self):
        if self.max_level < 1:
            raise ValueError("max_level must be >= 1")

    def breakpoints(self, level: int) -> np.ndarray:
        self._check(level)
        return self.horizon * np.arange(2**level + 1) / 2**level

    def mesh(self, level: int) -> float:
        return self.horizon / 2**level

    def indices(self, path: SampledPath, level: int) -> np.ndarray:
        self._check(level)
        if abs(path.horizon - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise GridMismatchError("path horizon differs from the partition horizon")
        n = path.n_cells
        if n % 2**level == 0 and np.allclose(path.times, np.linspace(0, self.horizon, n + 1), rtol=0, atol=1e-12):
            return np.arange(0, n + 1, n // 2**level)
        return path.index_of(self.breakpoints(level))

    def _check(self, level):
        if not 0 <= level <= self.max_level:
            raise ValueError(f"level {level} outside 0..{self.max_level}")


def _partition_for(path: SampledPath, level: int) -> DyadicPartitionSequence:
    return DyadicPartitionSequence(path.horizon, max(1, level))


def qv_curve(path: SampledPath, level: int) -> np.ndarray:
    """A^n at each breakpoint of the level-n dyadic partition."""
    idx = _partition_for(path, level).indices(path, level)
    inc = np.diff(path.values[idx])
    return np.concatenate([[0.0], np.cumsum(inc * inc)])


def qv_approx(path: SampledPath, level: int, t: float) -> float:
    """A^n(t) = sum_i (omega(t_{i+1} ^ t) - omega(t_i ^ t))^2."""
    if not 0.0 <= t <= path.horizon:
        raise ValueError("t outside [0, T]")
    bp = _partition_for(path, level).breakpoints(level)
    idx = _partition_for(path, level).indices(path, level)
    v = path.values[idx]
    k = np.searchsorted(bp, t, side="right") - 1  # last breakpoint <= t
    inc = np.diff(v[: k + 1])
    total = float(np.dot(inc, inc))
    if bp[k] < t:
        last = float(path.at(t)) - v[k]
        total += last * last
    return total


@dataclass(frozen=True, eq=False)
class QVEstimate:
    per_level: dict[int, np.ndarray]
    limit_estimate: float
    converged: bool
    horizon: float
    local_vol: np.ndarray | None = None

    @property
    def finest(self) -> int:
        return max(self.per_level)

    def at(self, t) -> np.ndarray:
        """[omega](t) from the finest level, linearly interpolated between breakpoints."""
        a = self.per_level[self.finest]
        grid = np.linspace(0.0, self.horizon, a.size)
        return np.interp(t, grid, a)


def qv_limit(path: SampledPath, partitions: DyadicPartitionSequence, tol: float = 1e-3, t: float | None = None) -> QVEstimate:
    """A^n for n = 1..N; converged when the last two level-to-level changes are
    at most tol * |A^N| (relative)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    levels = range(1, partitions.max_level + 1)
    per = {n: qv_curve(path, n) for n in levels}
    N = partitions.max_level
    ends = [per[n][-1] for n in levels]
    scale = abs(ends[-1])
    converged = len(ends) >= 3 and abs(ends[-1] - ends[-2]) <= tol * scale and abs(ends[-2] - ends[-3]) <= tol * scale
    limit = per[N][-1] if t is None else float(np.interp(t, partitions.breakpoints(N), per[N]))
    return QVEstimate(per, float(limit), bool(converged), path.horizon)


def local_realized_vol(qv: QVEstimate, path: SampledPath, t: float, window: float = 1.0 / 52) -> float:
    """(1/omega(t)) sqrt(([omega](t+window) - [omega](t)) / window)."""
    if window <= 0 or t < 0 or t + window > path.horizon + 1e-12:
        raise ValueError("[t, t + window] must lie in [0, T]")
    w = float(path.at(t))
    if w <= 0:
        raise ValueError("local realized volatility needs a strictly positive path")
    d = float(qv.at(t + window) - qv.at(t))
    return math.sqrt(max(d, 0.0) / window) / w


def local_vol_curve(path: SampledPath, level: int, cells: int = 1) -> np.ndarray:
    """sigma_mkt on each level-n cell using a forward window of `cells` cells."""
    idx = _partition_for(path, level).indices(path, level)
    v = path.values[idx]
    a = np.concatenate([[0.0], np.cumsum(np.diff(v) ** 2)])
    dt = path.horizon / 2**level
    n = v.size - 1
    ends = np.minimum(np.arange(n) + cells, n)
    width = (ends - np.arange(n)) * dt
    return np.sqrt((a[ends] - a[:-1]) / width) / v[:-1]


def continuous_qv(qv_total: float, path: SampledPath) -> float:
    """[omega]^c(T): subtract the squared jumps."""
    return qv_total - sum((path.values[i] - left) ** 2 for i, left in path.jumps.items())


def qv_gain_identity(path: SampledPath, level: int, t: float) -> tuple[float, float]:
    """Both sides of A^n(t) = omega(t)^2 - omega(0)^2 + G(t; phi^n), phi^n = -2 omega(t_i)."""
    a = qv_approx(path, level, t)
    bp = _partition_for(path, level).breakpoints(level)
    v_at = path.at(np.minimum(bp, t))
    gain = -2.0 * math.fsum(v_at[:-1] * np.diff(v_at))
    w_t = float(path.at(t))
    return a, w_t * w_t - path.values[0] ** 2 + gain


def resample_uniform(times, values, max_level: int, horizon: float | None = None, jump_flags=None) -> SampledPath:
    """Previous-tick resampling of irregular data onto a uniform grid of 2^N cells."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    T = float(times[-1] if horizon is None else horizon)
    grid = np.linspace(0.0, T, 2**max_level + 1)
    i = np.clip(np.searchsorted(times, grid, side="right") - 1, 0, None)
    v = values[i]
    jumps = {}
    if jump_flags is not None:
        for k in np.flatnonzero(np.asarray(jump_flags, dtype=bool)):
            g = int(np.searchsorted(grid, times[k]))
            if 0 < g < grid.size and k > 0 and values[k - 1] != v[g]:
                jumps[g] = float(values[k - 1])
    return SampledPath(grid, v, jumps, bool(np.all(v > 0)))


def read_path_csv(path, max_level: int | None = None) -> SampledPath:
    """Read `time,value[,jump]` CSV (header required)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"time", "value"} <= set(rows[0]):
        raise ValueError("CSV needs a header with columns time,value[,jump]")
    times = np.array([float(r["time"]) for r in rows])
    values = np.array([float(r["value"]) for r in rows])
    flags = np.array([int(r.get("jump") or 0) for r in rows]) if "jump" in rows[0] else None
    if max_level is None:
        n = times.size - 1
        if n > 0 and n & (n - 1) == 0 and np.allclose(times, np.linspace(0, times[-1], n + 1)):
            jumps = {}
            if flags is not None:
                jumps = {int(k): float(values[k - 1]) for k in np.flatnonzero(flags) if k > 0}
            return SampledPath(times, values, jumps, bool(np.all(values > 0)))
        max_level = max(1, math.ceil(math.log2(max(n, 1))))
    return resample_uniform(times, values, max_level, jump_flags=flags)


def gbm_path(sigma: float, T: float, level: int, seed: int, S0: float = 1.0) -> SampledPath:
    """Exact driftless GBM sample on a uniform grid of 2^level cells."""
    rng = np.random.default_rng(seed)
    n = 2**level
    dt = T / n
    z = rng.standard_normal(n)
    logs = np.concatenate([[0.0], np.cumsum(sigma * math.sqrt(dt) * z - 0.5 * sigma**2 * dt)])
    return SampledPath.uniform(T, S0 * np.exp(logs))

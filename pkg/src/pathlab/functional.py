"""Non-anticipative functionals on stopped paths and their pathwise derivatives.

A StoppedPath may carry array-valued stop indices, so a functional can be
evaluated along a whole partition in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .paths import DyadicPartitionSequence, SampledPath


class HorizonError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StoppedPath:
    """omega stopped at `time`, held constant after its last grid node `index`.

    `current` is omega(t) and may differ from the recorded value (vertical bump)."""

    base: SampledPath
    index: np.ndarray
    time: np.ndarray
    current: np.ndarray

    @classmethod
    def at(cls, base: SampledPath, index) -> "StoppedPath":
        idx = np.asarray(index, dtype=np.int64)
        return cls(base, idx, base.times[idx], base.values[idx])

    @classmethod
    def at_time(cls, base: SampledPath, t) -> "StoppedPath":
        idx = np.searchsorted(base.times, np.asarray(t, dtype=float), side="right") - 1
        return cls(base, idx, np.asarray(t, dtype=float), base.values[idx])

    def bump(self, e) -> "StoppedPath":
        return replace(self, current=self.current + e)

    def advance(self, dt) -> "StoppedPath":
        return replace(self, time=self.time + dt)

    def with_current(self, value) -> "StoppedPath":
        return replace(self, current=np.asarray(value, dtype=float) + 0 * self.current)

    @property
    def horizon(self) -> float:
        return self.base.horizon

    @property
    def left_limit(self) -> np.ndarray:
        """omega(t-) : the recorded left limit on jump marks, else the previous node."""
        i = np.asarray(self.index)
        prev = self.base.values[np.maximum(i - 1, 0)]
        marks = self.base.jumps
        if not marks:
            return np.where(i > 0, prev, self.current)
        left = np.array([marks.get(int(k), v) for k, v in zip(np.ravel(i), np.ravel(prev))]).reshape(np.shape(i))
        return np.where(i > 0, left, self.current)

    def _elapsed(self):
        return self.time - self.base.times[self.index]

    def integral(self):
        """int_0^t omega(s) ds with previous-tick interpolation; the single point t has no weight."""
        return self.base.cum_integral[self.index] + self.current * self._elapsed()

    def log_integral(self):
        return self.base.cum_log_integral[self.index] + np.log(self.current) * self._elapsed()

    def running_max(self):
        prev = np.where(self.index > 0, self.base.running_max[np.maximum(self.index - 1, 0)], -np.inf)
        return np.maximum(prev, self.current)

    def value_at(self, s: float):
        """omega(s) for s <= t; at s = t this is the (possibly bumped) current value."""
        k = int(np.searchsorted(self.base.times, s, side="right") - 1)
        return np.where(self.index <= k, self.current, self.base.values[k])


class NonAnticipativeFunctional:
    """F(t, omega_t).  Subclasses implement `value`; closed-form derivatives are optional."""

    name = "functional"

    def value(self, sp: StoppedPath):
        raise NotImplementedError

    def __call__(self, sp: StoppedPath):
        return self.value(sp)

    def greeks(self, sp: StoppedPath):
        """(grad_v, hess_v, horiz) in closed form, or None."""
        return None


class Functional(NonAnticipativeFunctional):
    def __init__(self, fn: Callable[[StoppedPath], np.ndarray], name: str = "functional", greeks=None):
        self._fn = fn
        self._greeks = greeks
        self.name = name

    def value(self, sp):
        return self._fn(sp)

    def greeks(self, sp):
        return None if self._greeks is None else self._greeks(sp)


def spot() -> Functional:
    return Functional(
        lambda sp: sp.current + 0.0,
        "spot",
        lambda sp: (np.ones_like(sp.current), np.zeros_like(sp.current), np.zeros_like(sp.current)),
    )


def elapsed_time() -> Functional:
    return Functional(lambda sp: sp.time + 0.0 * sp.current, "time")


def running_integral() -> Functional:
    return Functional(lambda sp: sp.integral(), "running-integral")


def square() -> Functional:
    return Functional(
        lambda sp: sp.current**2,
        "square",
        lambda sp: (2 * sp.current, 2.0 + 0 * sp.current, 0 * sp.current),
    )


def spot_times_integral() -> Functional:
    return Functional(
        lambda sp: sp.current * sp.integral(),
        "spot-times-integral",
        lambda sp: (sp.integral(), 0 * sp.current, sp.current**2),
    )


def default_bump(sp: StoppedPath):
    return 1e-4 * np.maximum(1.0, np.abs(sp.current))


def vertical_derivative(F: NonAnticipativeFunctional, sp: StoppedPath, bump=None):
    h = default_bump(sp) if bump is None else bump
    if np.any(np.asarray(h) <= 0):
        raise ValueError("bump must be positive")
    return (F(sp.bump(h)) - F(sp.bump(-h))) / (2 * h)


def vertical_derivative2(F: NonAnticipativeFunctional, sp: StoppedPath, bump=None):
    h = default_bump(sp) if bump is None else bump
    if np.any(np.asarray(h) <= 0):
        raise ValueError("bump must be positive")
    return (F(sp.bump(h)) - 2 * F(sp) + F(sp.bump(-h))) / (h * h)


def horizontal_derivative(F: NonAnticipativeFunctional, sp: StoppedPath, dt=None):
    """Forward difference in time with the path frozen at omega(t)."""
    if dt is None:
        dt = float(np.min(np.diff(sp.base.times)))
    if dt <= 0:
        raise ValueError("dt must be positive")
    if np.any(sp.time + dt > sp.horizon + 1e-12):
        raise HorizonError("t + dt exceeds the horizon")
    return (F(sp.advance(dt)) - F(sp)) / dt


@dataclass(frozen=True)
class DerivativeBundle:
    grad_v: np.ndarray
    hess_v: np.ndarray
    horiz: np.ndarray
    bump: object
    method: str


def derivatives(F: NonAnticipativeFunctional, sp: StoppedPath, bump=None, dt=None, closed_form=True) -> DerivativeBundle:
    g = F.greeks(sp) if closed_form else None
    if g is not None:
        return DerivativeBundle(*(np.asarray(x, dtype=float) for x in g), bump=None, method="closed-form")
    h = default_bump(sp) if bump is None else bump
    up, mid, dn = F(sp.bump(h)), F(sp), F(sp.bump(-h))
    if dt is None:
        dt = float(np.min(np.diff(sp.base.times)))
    # backward difference where the forward step would leave [0, T]
    fwd = sp.time + dt <= sp.horizon + 1e-12
    later = F(sp.advance(np.where(fwd, dt, 0.0)))
    earlier = F(sp.advance(np.where(fwd, 0.0, -dt)))
    horiz = np.where(fwd, later - mid, mid - earlier) / dt
    return DerivativeBundle((up - dn) / (2 * h), (up - 2 * mid + dn) / (h * h), horiz, h, "finite-difference")


@dataclass(frozen=True)
class FoellmerResult:
    per_level: dict[int, float]
    limit: float
    converged: bool


def riemann_sum(phi: NonAnticipativeFunctional, path: SampledPath, partitions: DyadicPartitionSequence, level: int) -> float:
    idx = partitions.indices(path, level)
    sp = StoppedPath.at(path, idx[:-1])
    return math.fsum(np.asarray(phi(sp)) * np.diff(path.values[idx]))


def foellmer_integral(phi: NonAnticipativeFunctional, path: SampledPath, partitions: DyadicPartitionSequence, tol: float = 1e-3) -> FoellmerResult:
    """Left-point Riemann sums of phi d(omega) along each level; limit = finest level."""
    sums = {n: riemann_sum(phi, path, partitions, n) for n in range(1, partitions.max_level + 1)}
    vals = list(sums.values())
    scale = max(1.0, abs(vals[-1]))
    conv = len(vals) >= 3 and abs(vals[-1] - vals[-2]) < tol * scale and abs(vals[-2] - vals[-3]) < tol * scale
    return FoellmerResult(sums, vals[-1], bool(conv))


def change_of_variable_residual(
    F: NonAnticipativeFunctional,
    path: SampledPath,
    partitions: DyadicPartitionSequence,
    bump=None,
    dt=None,
    level: int | None = None,
    closed_form: bool = False,
) -> float:
    """F(T) - F(0) - int grad F d omega - int DF dt - 1/2 int hess F d[omega] on the finest level."""
    n = partitions.max_level if level is None else level
    idx = partitions.indices(path, n)
    sp = StoppedPath.at(path, idx[:-1])
    d = derivatives(F, sp, bump, dt, closed_form=closed_form)
    dw = np.diff(path.values[idx])
    dts = np.diff(path.times[idx])
    end = float(F(StoppedPath.at(path, idx[-1])))
    start = float(F(StoppedPath.at(path, 0)))
    return end - start - math.fsum(d.grad_v * dw) - math.fsum(d.horiz * dts) - 0.5 * math.fsum(d.hess_v * dw * dw)

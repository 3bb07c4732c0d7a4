"""Second-order expansion of the transition density of a local-volatility
model with Gaussian (Merton) jumps.

Operators in x are stored normal-ordered: an array C[..., j, i] stands for
sum_{j,i} C[j, i] (x - xbar)^j d^i/dx^i.  Time integrals have polynomial
integrands once the exponential weights are factored out, so a fixed
Gauss-Legendre rule integrates them exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermeval
from numpy.polynomial.legendre import leggauss

from .levy import LocalLevyModel, Merton

JMAX = 4  # powers of (x - xbar)
IMAX = 10  # derivative orders


def _zero(shape=()):
    return np.zeros(shape + (JMAX, IMAX))


def op_mul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Normal-ordered product A B, broadcasting over leading axes.

    Uses d^b X^c = sum_m C(b, m) c!/(c-m)! X^(c-m) d^(b-m)."""
    shape = np.broadcast_shapes(A.shape[:-2], B.shape[:-2])
    out = _zero(shape)
    for a in range(JMAX):
        for b in range(IMAX):
            ab = A[..., a, b]
            if not np.any(ab):
                continue
            for c in range(JMAX):
                for m in range(min(b, c) + 1):
                    coef = math.comb(b, m) * math.perm(c, m)
                    jj = a + c - m
                    if jj >= JMAX:
                        if np.any(B[..., c, :]):
                            raise OverflowError("operator degree in x exceeds table size")
                        continue
                    for d in range(IMAX):
                        bd = B[..., c, d]
                        if not np.any(bd):
                            continue
                        ii = b - m + d
                        if ii >= IMAX:
                            raise OverflowError("operator derivative order exceeds table size")
                        out[..., jj, ii] += coef * ab * bd
    return out


def _v_op(c, v):
    """V = (X + c) + v d, vectorized over c, v arrays."""
    c = np.asarray(c, dtype=float)
    out = _zero(c.shape)
    out[..., 1, 0] = 1.0
    out[..., 0, 0] = c
    out[..., 0, 1] = v
    return out


def _l_op():
    """d^2 - d."""
    out = _zero()
    out[0, 2] = 1.0
    out[0, 1] = -1.0
    return out


@dataclass(frozen=True)
class MertonDensityExpansion:
    """Expansion G^0 + G^1 + G^2 of the transition density, series cut at M."""

    model: LocalLevyModel
    t: float
    x: float
    T: float
    M: int = 8
    xbar: float | None = None
    nodes: int = 40
    _ops: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.model.jumps, Merton):
            raise TypeError("density expansion requires Gaussian (Merton) jumps")
        if not self.t < self.T:
            raise ValueError("need t < T")

    @property
    def _xb(self):
        return self.x if self.xbar is None else self.xbar

    def _setup(self):
        j = self.model.jumps
        a = self.model.alphas(self._xb)
        tau = self.T - self.t
        g, w = leggauss(self.nodes)
        u = 0.5 * tau * (g + 1.0)  # s - t at the nodes
        w = 0.5 * tau * w
        return j, a, tau, u, w

    def _drift(self, a0, u, n):
        j = self.model.jumps
        c = (self.model.r0 - 0.5 * a0) * u + n * j.m
        v = a0 * u + n * j.delta**2
        return c, v

    def _j1_coeffs(self, s0: float, T: float, n: int, k: int):
        """Normal-ordered coefficients of J^1_{n,k}(s0, T, .) (exact Beta moments)."""
        j = self.model.jumps
        a = self.model.alphas(self._xb)
        a0, a1 = a[0], a[1]
        lam = j.lam
        tau = T - s0
        b0 = tau ** (n + k + 1) * math.factorial(n) * math.factorial(k) / math.factorial(n + k + 1)
        b1 = tau ** (n + k + 2) * math.factorial(n + 1) * math.factorial(k) / math.factorial(n + k + 2)
        cint = (self.model.r0 - 0.5 * a0) * b1 + n * j.m * b0
        vint = a0 * b1 + n * j.delta**2 * b0
        pref = a1 * math.exp(-lam * tau) * lam ** (n + k) / (math.factorial(n) * math.factorial(k))
        C = _zero()
        C[1, 2] = b0
        C[1, 1] = -b0
        C[0, 2] = cint - vint
        C[0, 1] = -cint
        C[0, 3] = vint
        return pref * C

    def operators(self, order: int = 2) -> dict[int, np.ndarray]:
        """Map N -> total operator acting on Gamma_N for the requested order term."""
        if order not in self._ops:
            self._ops[order] = self._build(order)
        return self._ops[order]

    def _build(self, order: int) -> dict[int, np.ndarray]:
        j, a, tau, u, w = self._setup()
        lam, M = j.lam, self.M
        a0, a1, a2 = a[0], a[1], a[2]
        L = _l_op()
        ops: dict[int, np.ndarray] = {}

        def add(N, C):
            ops[N] = ops.get(N, _zero()) + C

        if order == 0:
            for n in range(M + 1):
                C = _zero()
                C[0, 0] = math.exp(-lam * tau) * (lam * tau) ** n / math.factorial(n)
                add(n, C)
            return ops
        if order == 1:
            for n in range(M + 1):
                for k in range(M + 1):
                    add(n + k, self._j1_coeffs(self.t, self.T, n, k))
            return ops
        if order != 2:
            raise ValueError("density expansion available for orders 0, 1, 2")
        s = self.t + u
        for n in range(M + 1):
            c, v = self._drift(a0, u, n)
            V = _v_op(c, v)
            VL = op_mul(V, L)
            # J^{2,2}_{n,k}: alpha_2 V^2 (d^2 - d), weights (s-t)^n (T-s)^k
            V2L = op_mul(V, VL)
            base = math.exp(-lam * tau) * lam**n / math.factorial(n) * a2 * w * u**n
            for k in range(M + 1):
                wk = base * (tau - u) ** k * lam**k / math.factorial(k)
                add(n + k, np.einsum("q,qji->ji", wk, V2L))
            # J^{2,1}_{n,h,k}: alpha_1 V (d^2 - d) Jtilde, Jtilde = sum f(s,T) V^j d^i
            P = {}
            for jj in (0, 1):
                for ii in range(1, 4):
                    D = _zero()
                    D[0, ii] = 1.0
                    R = op_mul(V, D) if jj == 1 else np.broadcast_to(D, V.shape).copy()
                    P[jj, ii] = op_mul(VL, R)
            wn = lam**n / math.factorial(n) * a1 * np.exp(-lam * u) * u**n * w
            for h in range(M + 1):
                for k in range(M + 1):
                    tot = _zero()
                    for q in range(len(s)):
                        f = self._j1_coeffs(s[q], self.T, h, k)
                        for (jj, ii), Pm in P.items():
                            if f[jj, ii] != 0.0:
                                tot += wn[q] * f[jj, ii] * Pm[q]
                    add(n + h + k, tot)
        return ops

    def _gamma_params(self, N):
        j = self.model.jumps
        a0 = self.model.alphas(self._xb)[0]
        tau = self.T - self.t
        A = a0 * tau
        mu = tau * self.model.r0 - 0.5 * A + N * j.m
        return mu, A + N * j.delta**2

    def _apply(self, ops, y):
        """Sum_N ops[N] Gamma_N(t, x; T, y) evaluated at the spot x."""
        y = np.asarray(y, dtype=float)
        X = self.x - self._xb
        out = np.zeros_like(y)
        for N, C in ops.items():
            mu, var = self._gamma_params(N)
            sd = math.sqrt(var)
            z = (self.x - y + mu) / sd
            g = np.exp(-0.5 * z**2) / (math.sqrt(2 * math.pi) * sd)
            # d^i/dx^i Gamma = (-1)^i He_i(z) sd^-i Gamma
            coef_i = np.array([sum(C[jj, i] * X**jj for jj in range(JMAX)) for i in range(IMAX)])
            series = coef_i * np.array([(-1.0 / sd) ** i for i in range(IMAX)])
            out += hermeval(z, series) * g
        return out

    def _fourier(self, ops, xi):
        xi = np.asarray(xi, dtype=complex)
        X = self.x - self._xb
        out = np.zeros_like(xi)
        for N, C in ops.items():
            mu, var = self._gamma_params(N)
            base = np.exp(1j * xi * (self.x + mu) - 0.5 * var * xi**2)
            poly = sum(C[jj, i] * X**jj * (1j * xi) ** i for jj in range(JMAX) for i in range(IMAX))
            out += poly * base
        return out

    def term(self, order: int, y):
        return self._apply(self.operators(order), y)

    def density(self, y, order: int = 2):
        """Gamma^order_M(t, x; T, y)."""
        return sum(self.term(k, y) for k in range(order + 1))

    def fourier(self, xi, order: int = 2):
        """Closed-form transform int e^{i xi y} Gamma^order_M dy (Gaussian derivative rule)."""
        return sum(self._fourier(self.operators(k), xi) for k in range(order + 1))


def merton_density(model: LocalLevyModel, order: int, M: int, t: float, x: float, T: float, y, xbar=None):
    return MertonDensityExpansion(model, t, x, T, M, xbar).density(y, order)

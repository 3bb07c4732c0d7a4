"""Local Levy models: characteristic exponent, adjoint expansion of the
characteristic function, Fourier (Lewis) pricing and implied volatility."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm


class StripError(ValueError):
    """Argument outside the analyticity strip of the characteristic exponent."""


class OrderError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CEV:
    sigma0: float = 0.2
    beta: float = 0.5

    def alphas(self, xbar: float, n: int = 4) -> np.ndarray:
        # a(x) = sigma0^2 exp(2(beta-1)x); alpha_0 = a(xbar), alpha_k = a^(k)(xbar) / (2 k!)
        c = 2.0 * (self.beta - 1.0)
        a0 = self.sigma0**2 * math.exp(c * xbar)
        out = np.array([a0 * c**k / (2.0 * math.factorial(k)) for k in range(n + 1)])
        out[0] = a0
        return out


@dataclass(frozen=True)
class TaylorVol:
    """Local variance a(x) = alpha_0 + 2 sum_k alpha_k (x - xbar)^k."""

    coeffs: tuple[float, ...]
    xbar: float = 0.0

    def alphas(self, xbar: float, n: int = 4) -> np.ndarray:
        out = np.zeros(n + 1)
        m = min(n + 1, len(self.coeffs))
        out[:m] = self.coeffs[:m]
        return out


@dataclass(frozen=True)
class Merton:
    lam: float = 0.3
    m: float = -0.1
    delta: float = 0.4

    def compensator(self) -> float:
        return self.lam * (math.exp(self.m + 0.5 * self.delta**2) - 1.0)

    def derivs(self, xi):
        u = 1j * self.m * xi - 0.5 * self.delta**2 * xi**2
        u1 = 1j * self.m - self.delta**2 * xi
        u2 = -self.delta**2
        e = self.lam * np.exp(u)
        return (
            self.lam * (np.exp(u) - 1.0),
            e * u1,
            e * (u1**2 + u2),
            e * (u1**3 + 3 * u1 * u2),
            e * (u1**4 + 6 * u1**2 * u2 + 3 * u2**2),
        )


@dataclass(frozen=True)
class VarianceGamma:
    kappa: float = 0.15
    theta: float = -0.1
    rho: float = 0.2

    def __post_init__(self):
        if 1.0 - self.kappa * (self.theta + 0.5 * self.rho**2) <= 0:
            raise ValueError("variance-gamma parameters violate 1 - kappa(theta + rho^2/2) > 0")

    def compensator(self) -> float:
        return -math.log(1.0 - self.kappa * (self.theta + 0.5 * self.rho**2)) / self.kappa

    def check_strip(self, xi) -> None:
        s = -np.imag(xi)
        q = 1.0 - self.theta * self.kappa * s - 0.5 * self.rho**2 * self.kappa * s**2
        if np.any(q <= 0):
            raise StripError("xi outside the variance-gamma analyticity strip")

    def derivs(self, xi):
        self.check_strip(xi)
        k = self.kappa
        q = 1.0 - 1j * self.theta * k * xi + 0.5 * self.rho**2 * k * xi**2
        q1 = -1j * self.theta * k + self.rho**2 * k * xi
        q2 = self.rho**2 * k
        l1 = q1 / q
        l2 = q2 / q - l1**2
        l3 = -3 * q1 * q2 / q**2 + 2 * l1**3
        l4 = -3 * q2**2 / q**2 + 12 * q1**2 * q2 / q**3 - 6 * l1**4
        return tuple(-v / k for v in (np.log(q), l1, l2, l3, l4))


@dataclass(frozen=True)
class NoJumps:
    def compensator(self) -> float:
        return 0.0

    def derivs(self, xi):
        z = np.zeros_like(np.asarray(xi, dtype=complex))
        return (z, z, z, z, z)


Jumps = Union[Merton, VarianceGamma, NoJumps]


@dataclass(frozen=True)
class LocalLevyModel:
    local_vol: Union[CEV, TaylorVol] = field(default_factory=CEV)
    jumps: Jumps = field(default_factory=Merton)
    r: float = 0.05

    @property
    def r0(self) -> float:
        """Drift making exp(X) - rt a martingale (compound Poisson / closed VG form)."""
        return self.r - self.jumps.compensator()

    def alphas(self, xbar: float) -> np.ndarray:
        a = self.local_vol.alphas(xbar)
        if a[0] <= 0:
            raise ValueError("alpha_0 must be positive")
        return a

    def local_variance(self, x):
        """Squared local volatility a(x) in log-price coordinates."""
        lv = self.local_vol
        if isinstance(lv, CEV):
            return lv.sigma0**2 * np.exp(2.0 * (lv.beta - 1.0) * np.asarray(x))
        a = np.asarray(lv.coeffs, dtype=float)
        d = np.asarray(x) - lv.xbar
        return a[0] + 2.0 * sum(c * d**k for k, c in enumerate(a) if k > 0)


def char_exponent(model: LocalLevyModel, xi, xbar: float = 0.0, alpha0: float | None = None):
    """psi and its first four derivatives at xi, for the Levy process with
    diffusion coefficient frozen at xbar."""
    xi = np.asarray(xi, dtype=complex)
    a0 = model.alphas(xbar)[0] if alpha0 is None else alpha0
    r0 = model.r0
    j = model.jumps.derivs(xi)
    one = np.ones_like(xi)
    psi = -0.5 * a0 * (xi**2 + 1j * xi) + 1j * r0 * xi + j[0]
    p1 = -0.5 * a0 * (2 * xi + 1j) + 1j * r0 + j[1]
    p2 = -a0 * one + j[2]
    return psi, p1, p2, j[3], j[4]


def _g3_terms(xi, a, p):
    a1, a2, a3 = a[1], a[2], a[3]
    _, p1, p2, p3, _ = p
    I = 1j
    u = xi * (I + xi)
    return (
        0.5 * a3 * (1 - I * xi) * xi * p3,
        I * u / 6 * (2 * p1 * (a1 * a2 - 3 * a3 * p2) + a1 * a2 * (3 * (I + 2 * xi) * p2 + 2 * u * p3)),
        (1 - I * xi) * xi / 24 * (
            -8 * a1 * a2 * (I + 2 * xi) * p1**2
            + 6 * a3 * p1**3
            + a1 * p1 * (a1**2 * (-1 + 6 * u) - 16 * a2 * u * p2)
            + a1**3 * u * (3 * (I + 2 * xi) * p2 + u * p3)
        ),
        -I / 12 * a1 * u**2 * p1 * (a1**2 * (I + 2 * xi) * p1 - 2 * a2 * p1**2 + a1**2 * u * p2),
        -I / 48 * (a1 * u * p1) ** 3,
    )


def _g4_terms(xi, a, p):
    a1, a2, a3, a4 = a[1], a[2], a[3], a[4]
    _, p1, p2, p3, p4 = p
    I = 1j
    u = xi * (I + xi)
    w = I + 2 * xi
    b = a2**2 + 2 * a1 * a3
    return (
        -0.5 * a4 * u * p4,
        u / 6 * (2 * p2 * (a2**2 + 3 * a1 * a3 - 3 * a4 * p2) + 2 * (b * w - 4 * a4 * p1) * p3 + b * u * p4),
        -u / 24 * (
            a1**2 * a2 * (-7 + 44 * u) * p2
            - (7 * a2**2 + 15 * a1 * a3) * u * p2**2
            - 2 * p1**2 * (2 * a2**2 + 9 * a1 * a3 - 18 * a4 * p2)
            + p1 * (w * (8 * a1**2 * a2 - (14 * a2**2 + 33 * a1 * a3) * p2) - (10 * a2**2 + 21 * a1 * a3) * u * p3)
            + 3 * a1**2 * a2 * u * (4 * w * p3 + u * p4)
        ),
        u / 120 * (
            2 * (8 * a2**2 + 21 * a1 * a3) * w * p1**3
            - 24 * a4 * p1**4
            + 2 * p1**2 * (a1**2 * a2 * (11 - 70 * u) + (26 * a2**2 + 57 * a1 * a3) * u * p2)
            + a1**2 * p1 * (w * (a1**2 * (-1 + 12 * u) - 112 * a2 * u * p2) - 38 * a2 * u**2 * p3)
            + a1**2 * u * (a1**2 * (-7 + 36 * u) * p2 - 26 * a2 * u * p2**2 + a1**2 * u * (6 * w * p3 + u * p4))
        ),
        u**2 / 144 * (
            -32 * a1**2 * a2 * w * p1**3
            + 2 * (4 * a2**2 + 9 * a1 * a3) * p1**4
            + 2 * a1**4 * u**2 * p2**2
            + a1**2 * p1**2 * (a1**2 * (-5 + 26 * u) - 47 * a2 * u * p2)
            + a1**4 * u * p1 * (13 * w * p2 + 3 * u * p3)
        ),
        a1**2 * u**3 / 48 * p1**2 * (a1**2 * w * p1 - 2 * a2 * p1**2 + a1**2 * u * p2),
        a1**4 * u**4 * p1**4 / 384,
    )


def correction_factor(k: int, xi, tau: float, d: float, a, p):
    """Q_k with G^k = G^0 * Q_k; d = x - xbar."""
    xi = np.asarray(xi, dtype=complex)
    a1, a2 = a[1], a[2]
    _, p1, p2, _, _ = p
    u = xi * (xi + 1j)
    if k == 0:
        return np.ones_like(xi)
    if k == 1:
        return -a1 * tau * u * (d - 0.5j * tau * p1)
    if k == 2:
        c2 = 0.5 * tau * u * (a1**2 * tau * u - 2 * a2)
        c1 = -0.5j * tau**2 * u * (a1**2 * tau * u * p1 - 2 * a2 * p1 + a1**2 * (2 * xi + 1j))
        c0 = -tau**2 * u / 24 * (
            3 * a1**2 * tau**2 * u * p1**2
            - 8 * a2 * tau * p1**2
            + 4 * a1**2 * tau * (2 * xi + 1j) * p1
            + 4 * a1**2 * tau * u * p2
            - 12 * a2 * p2
        )
        return c0 + d * (c1 + d * c2)
    if k in (3, 4):
        if d != 0:
            raise OrderError("orders 3 and 4 are available only with basepoint xbar = x")
        terms = _g3_terms(xi, a, p) if k == 3 else _g4_terms(xi, a, p)
        # the j-th coefficient multiplies tau^(j-1), j = 3, 4, ...
        return sum(g * tau ** (j + 2) for j, g in enumerate(terms))
    raise OrderError(f"expansion order {k} not available (0..4)")


def g_hat(model: LocalLevyModel, k: int, t: float, x: float, T: float, xi, xbar: float | None = None):
    """k-th term of the expansion of the characteristic function of X(T) given X(t)=x."""
    if not t < T:
        raise ValueError("need t < T")
    if k not in range(5):
        raise OrderError(f"expansion order {k} not available (0..4)")
    xb = x if xbar is None else xbar
    a = model.alphas(xb)
    p = char_exponent(model, xi, xb, a[0])
    tau = T - t
    xi = np.asarray(xi, dtype=complex)
    g0 = np.exp(1j * xi * x + tau * p[0])
    return g0 * correction_factor(k, xi, tau, x - xb, a, p)


def charfun_approx(model: LocalLevyModel, n: int, t: float, x: float, T: float, xi, xbar: float | None = None):
    if n not in range(5):
        raise OrderError(f"expansion order {n} not available (0..4)")
    xb = x if xbar is None else xbar
    a = model.alphas(xb)
    xi = np.asarray(xi, dtype=complex)
    p = char_exponent(model, xi, xb, a[0])
    tau = T - t
    q = sum(correction_factor(k, xi, tau, x - xb, a, p) for k in range(n + 1))
    return np.exp(1j * xi * x + tau * p[0]) * q


def _xi_max(model, tau, a0, gamma, xbar, cutoff=1e-14):
    # Gaussian part dominates the decay; refine with the actual exponent
    hi = math.sqrt(2.0 * -math.log(cutoff) / (a0 * tau)) + 10.0
    z = -(hi + 1j * gamma)
    while np.real(tau * char_exponent(model, z, xbar, a0)[0]) > math.log(cutoff) and hi < 1e5:
        hi *= 1.5
        z = -(hi + 1j * gamma)
    return hi


def lewis_price(
    model: LocalLevyModel,
    order: int,
    K: float,
    t: float,
    S: float,
    T: float,
    gamma: float = 1.5,
    xbar: float | None = None,
) -> float:
    """European call price by Fourier inversion along Im = gamma (gamma > 1)."""
    if gamma <= 1:
        raise ValueError("call transform needs gamma > 1")
    x = math.log(S)
    tau = T - t
    xb = x if xbar is None else xbar
    a0 = model.alphas(xb)[0]
    logk = math.log(K)

    def integrand(v):
        z = v + 1j * gamma
        fhat = K ** (1 - gamma) * np.exp(1j * v * logk) / ((1j * v - gamma) * (1j * v - gamma + 1))
        return float(np.real(fhat * charfun_approx(model, order, t, x, T, -z, xbar)))

    top = _xi_max(model, tau, a0, gamma, xb)
    with warnings.catch_warnings():
        # quad flags roundoff near epsabs; the error estimate is checked below instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, 0.0, top, limit=1000, epsabs=1e-14, epsrel=1e-12)
    if not np.isfinite(val) or err > 1e-7 * max(1.0, abs(val)):
        raise QuadratureError(f"Fourier integral did not converge (err={err:.2e})")
    return math.exp(-model.r * tau) / math.pi * val


def black_call(S: float, K: float, tau: float, sigma: float, r: float = 0.0) -> float:
    fwd = S * math.exp(r * tau)
    df = math.exp(-r * tau)
    sd = sigma * math.sqrt(tau)
    if sd <= 0:
        return df * max(fwd - K, 0.0)
    d1 = (math.log(fwd / K) + 0.5 * sd * sd) / sd
    return df * (fwd * norm.cdf(d1) - K * norm.cdf(d1 - sd))


def implied_vol(price: float, K: float, tau: float, S: float, r: float = 0.0) -> float:
    """Black-Scholes implied volatility of a call by bracketed root finding."""
    df = math.exp(-r * tau)
    lo_bound = max(S - K * df, 0.0)
    if not (lo_bound <= price < S):
        raise ValueError(f"price {price} outside no-arbitrage bounds [{lo_bound}, {S})")
    f = lambda s: black_call(S, K, tau, s, r) - price
    lo, hi = 1e-12, 1.0
    if f(lo) >= 0:
        return 0.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e3:
            raise ValueError("implied volatility above 1000")
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)


@dataclass(frozen=True)
class OrderScan:
    """errors[T][n]: RMS over strikes of |order-n price - MC|; noise[T]: 3 x RMS standard error."""

    errors: dict
    noise: dict
    prices: dict

    def violations(self) -> list[tuple[float, int]]:
        """(T, n) where order n+1 is worse than order n while order n+1 sits above the noise floor."""
        out = []
        for T, errs in self.errors.items():
            for n in range(len(errs) - 1):
                if errs[n + 1] > errs[n] and errs[n + 1] > self.noise[T]:
                    out.append((T, n))
        return out

    @property
    def monotone(self) -> bool:
        return not self.violations()


def convergence_order_scan(model: LocalLevyModel, mc_prices: dict, max_order: int = 4, S: float = 1.0) -> OrderScan:
    """mc_prices maps (T, K) -> object with .price and .se (e.g. mc.MCPrice)."""
    by_T: dict[float, list[float]] = {}
    for T, K in mc_prices:
        by_T.setdefault(T, []).append(K)
    errors, noise, prices = {}, {}, {}
    for T, strikes in sorted(by_T.items()):
        ref = np.array([mc_prices[T, K].price for K in strikes])
        se = np.array([mc_prices[T, K].se for K in strikes])
        errs = []
        for n in range(max_order + 1):
            p = np.array([lewis_price(model, n, K, 0.0, S, T) for K in strikes])
            prices[T, n] = p
            errs.append(float(np.sqrt(np.mean((p - ref) ** 2))))
        errors[T] = errs
        noise[T] = float(3 * np.sqrt(np.mean(se**2)))
    return OrderScan(errors, noise, prices)

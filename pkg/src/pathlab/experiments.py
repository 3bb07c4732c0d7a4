"""Experiment runners behind the CLI.  Each takes a validated RunConfig and returns a
JSON-ready summary; tolerance failures raise ToleranceFailure."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from pathlib import Path

import numpy as np

from . import benchmarks
from .config import RunConfig, SchemaError, build_model, build_payoff
from .functional import StoppedPath, derivatives
from .hedging import HEDGE_QV_TOL, hedge_batch, write_batch_csv
from .levy import LocalLevyModel, convergence_order_scan, implied_vol, lewis_price
from .mc import MCConfig, call_prices, simulate
from .paths import DyadicPartitionSequence, SampledPath, gbm_path, qv_limit, read_path_csv
from .pricing import ArithmeticAsianCall, BSModelSpec, pricing_functional

SUPER_REPLICATION_TOL = 1e-3


class ToleranceFailure(RuntimeError):
    def __init__(self, message: str, summary: dict):
        super().__init__(message)
        self.summary = summary


def _fmt(x) -> str:
    return "" if x is None else f"{x:.10g}"


def _write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def _levy_model(cfg: RunConfig) -> LocalLevyModel:
    m = build_model(cfg.model or {"kind": "cev-merton"})
    if not isinstance(m, LocalLevyModel):
        raise SchemaError("this experiment needs a local Levy model")
    return m


def _bs_model(cfg: RunConfig) -> BSModelSpec:
    m = build_model(cfg.model or {"kind": "bs"})
    if not isinstance(m, BSModelSpec):
        raise SchemaError("this experiment needs a Black-Scholes model (kind: bs)")
    return m


def _mc_config(cfg: RunConfig, horizon: float) -> MCConfig:
    mc = cfg.mc
    return MCConfig(
        n_paths=int(mc.get("n_paths", 1_000_000)),
        steps_per_year=int(mc.get("steps_per_year", 250)),
        seed=int(cfg.seed),
        antithetic=bool(mc.get("antithetic", True)),
        horizon=horizon,
    )


def run_qv(cfg: RunConfig) -> dict:
    p = cfg.params
    if "input" not in p:
        raise SchemaError("qv needs params.input")
    level = cfg.partition.get("max_level")
    path = read_path_csv(p["input"], level)
    if level is None and path.n_cells < 8:
        # the convergence rule needs at least three levels
        level = 3
        path = read_path_csv(p["input"], level)
    N = int(level or round(math.log2(path.n_cells)))
    est = qv_limit(path, DyadicPartitionSequence(path.horizon, N), tol=float(cfg.partition.get("tol", 1e-3)))
    out = {
        "levels": {str(n): float(a[-1]) for n, a in est.per_level.items()},
        "limit": est.limit_estimate,
        "converged": est.converged,
        "jumps": len(path.jumps),
    }
    if "json" in cfg.output:
        _write_json(cfg.output["json"], out)
    return out


def run_greeks(cfg: RunConfig) -> dict:
    model = _bs_model(cfg)
    F = pricing_functional(model, build_payoff(cfg.payoff or {"kind": "european"}))
    p = cfg.params
    t = float(p.get("t", 0.0))
    if "input" in p:
        path = read_path_csv(p["input"])
    else:
        path = SampledPath.uniform(model.horizon, np.full(2**10 + 1, float(p.get("S", 1.0))))
    sp = StoppedPath.at_time(path, np.array([t]))
    out = {"t": t, "S": float(sp.current[0]), "value": float(F(sp)[0])}
    for closed in (True, False):
        d = derivatives(F, sp, closed_form=closed)
        out[d.method] = {"grad_v": float(d.grad_v[0]), "hess_v": float(d.hess_v[0]), "horiz": float(d.horiz[0])}
    if "json" in cfg.output:
        _write_json(cfg.output["json"], out)
    return out


def run_hedge(cfg: RunConfig) -> dict:
    model = _bs_model(cfg)
    payoff = build_payoff(cfg.payoff or {"kind": "european"})
    p = cfg.params
    n_paths = int(p.get("paths", 200))
    sigma_true = float(p.get("sigma_true", 0.15))
    S0 = float(p.get("S0", 1.0))
    level = int(cfg.partition.get("level", 14))
    parts = DyadicPartitionSequence(model.horizon, level)
    F = pricing_functional(model, payoff, **({"S_ref": S0} if isinstance(payoff, ArithmeticAsianCall) else {}))
    paths = (gbm_path(sigma_true, model.horizon, level, cfg.seed + i, S0) for i in range(n_paths))
    sigma_model = model.sigmas[0] if len(model.sigmas) == 1 else (lambda t, x: model.sigma_at(t))
    reports = hedge_batch(lambda _: F, paths, parts, level, sigma_model, qv_tol=float(cfg.partition.get("tol", HEDGE_QV_TOL)))
    direct = np.array([r.direct_error for r in reports])
    summary = {
        "paths": n_paths,
        "level": level,
        "robust_frequency": float(np.mean(direct >= -SUPER_REPLICATION_TOL)),
        "positive_errors": int(np.sum(direct > 0)),
        "negative_errors": int(np.sum(direct < 0)),
        "verdicts": dict(sorted(Counter(r.verdict for r in reports).items())),
        "mean_direct_error": float(direct.mean()),
    }
    if "csv" in cfg.output:
        write_batch_csv(reports, cfg.output["csv"])
    if "json" in cfg.output:
        _write_json(cfg.output["json"], summary)
    need = p.get("min_robust_frequency")
    if need is not None and summary["robust_frequency"] < float(need):
        raise ToleranceFailure(f"robust frequency {summary['robust_frequency']:.3f} < {need}", summary)
    return summary


def _strikes(p) -> list[float]:
    k = p.get("K", [1.0])
    return [float(x) for x in (k if isinstance(k, list) else [k])]


def run_price_expansion(cfg: RunConfig) -> dict:
    model = _levy_model(cfg)
    p = cfg.params
    order = int(p.get("order", 4))
    T = float(p.get("T", 1.0))
    S = float(p.get("S", 1.0))
    rows = []
    for K in _strikes(p):
        price = lewis_price(model, order, K, 0.0, S, T, gamma=float(p.get("gamma", 1.5)))
        rows.append({"K": K, "price": price, "iv": 100 * implied_vol(price, K, T, S, model.r)})
    out = {"order": order, "T": T, "rows": rows}
    if "json" in cfg.output:
        _write_json(cfg.output["json"], out)
    return out


def run_price_mc(cfg: RunConfig) -> dict:
    model = _levy_model(cfg)
    p = cfg.params
    T = float(p.get("T", 1.0))
    S = float(p.get("S", 1.0))
    ens = simulate(model, _mc_config(cfg, T), math.log(S), [T])
    strikes = _strikes(p)
    prices = call_prices(ens, model.r, {T: strikes})
    rows = [{"K": K, "price": v.price, "se": v.se, "ci95": list(v.ci95), "ci99": list(v.ci99)} for (_, K), v in prices.items()]
    out = {"T": float(ens.maturities[0]), "rows": rows}
    if "json" in cfg.output:
        _write_json(cfg.output["json"], out)
    return out


TABLE_COLUMNS = ("T", "K", "price_ppr", "price_mc_lo", "price_mc_hi", "iv_ppr", "iv_mc_lo", "iv_mc_hi")


def _iv_or_none(price, K, T, S, r):
    try:
        return 100 * implied_vol(price, K, T, S, r)
    except ValueError:
        return None


def run_reproduce_table(cfg: RunConfig) -> dict:
    which = cfg.params.get("which", "merton")
    if which not in benchmarks.ROWS:
        raise SchemaError("which must be merton or vg")
    rows = benchmarks.ROWS[which]
    model = build_model(cfg.model) if cfg.model else (benchmarks.cev_merton() if which == "merton" else benchmarks.cev_vg())
    n_paths = int(cfg.mc.get("n_paths", 1_000_000))
    mc = {}
    if n_paths > 0:
        mats = sorted({r.T for r in rows})
        ens = simulate(model, _mc_config(cfg, mats[-1]), 0.0, mats)
        strikes = {T: [r.K for r in rows if r.T == T] for T in mats}
        mc = call_prices(ens, model.r, strikes)
    table, failures = [], []
    for r in rows:
        price = lewis_price(model, 4, r.K, 0.0, 1.0, r.T)
        lo = hi = None
        if mc:
            lo, hi = mc[r.T, r.K].ci95
        iv = _iv_or_none(price, r.K, r.T, 1.0, model.r)
        ivlo = _iv_or_none(lo, r.K, r.T, 1.0, model.r) if lo is not None else None
        ivhi = _iv_or_none(hi, r.K, r.T, 1.0, model.r) if hi is not None else None
        table.append((r.T, r.K, price, lo, hi, iv, ivlo, ivhi))
        if abs(price - r.price) > benchmarks.tolerance(r.T):
            failures.append({"T": r.T, "K": r.K, "price": price, "benchmark": r.price})
    if "csv" in cfg.output:
        _write_csv(cfg.output["csv"], TABLE_COLUMNS, table)
    summary = {"which": which, "rows": len(table), "failures": failures}
    if failures:
        raise ToleranceFailure(f"{len(failures)} prices outside tolerance", summary)
    return summary


def run_error_curves(cfg: RunConfig) -> dict:
    model = _levy_model(cfg)
    p = cfg.params
    mats = [float(x) for x in p.get("maturities", [1 / 12, 1 / 6, 1 / 4, 1 / 2])]
    strikes = _strikes({"K": p.get("K", [0.8, 0.9, 1.0, 1.1, 1.2])})
    # 240 steps per year keeps monthly maturities on the grid
    mcc = _mc_config(cfg, max(mats))
    if "steps_per_year" not in cfg.mc:
        mcc = MCConfig(mcc.n_paths, 240, mcc.seed, mcc.antithetic, mcc.horizon)
    ens = simulate(model, mcc, 0.0, mats)
    raw = call_prices(ens, model.r, {T: strikes for T in mats})
    mc = {(float(T), K): v for (T, K), v in raw.items()}
    scan = convergence_order_scan(model, mc, max_order=int(p.get("max_order", 4)))
    rows = []
    for j, T in enumerate(sorted(scan.errors)):
        for n in range(len(scan.errors[T])):
            for i, K in enumerate(strikes):
                ref = mc[T, K]
                price = float(scan.prices[T, n][i])
                rows.append((T, K, n, price, ref.price, ref.se, price - ref.price))
    if "csv" in cfg.output:
        _write_csv(cfg.output["csv"], ("T", "K", "order", "price", "mc_price", "mc_se", "error"), rows)
    summary = {
        "rms_error": {f"{T:.6g}": e for T, e in scan.errors.items()},
        "noise_floor": {f"{T:.6g}": e for T, e in scan.noise.items()},
        "monotone": scan.monotone,
        "violations": scan.violations(),
    }
    if not scan.monotone:
        raise ToleranceFailure("error does not decrease with order", summary)
    return summary


RUNNERS = {
    "qv": run_qv,
    "greeks": run_greeks,
    "hedge": run_hedge,
    "price-expansion": run_price_expansion,
    "price-mc": run_price_mc,
    "reproduce-table": run_reproduce_table,
    "error-curves": run_error_curves,
}


def run(cfg: RunConfig) -> dict:
    return RUNNERS[cfg.experiment](cfg.validate())

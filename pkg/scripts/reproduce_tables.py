"""Fourth-order call prices for the CEV-Merton and CEV-VG benchmark strikes, next to
the reference values and (optionally) a fresh Monte Carlo interval.

    python scripts/reproduce_tables.py --which merton --paths 100000
"""
import argparse
import time

from pathlab import benchmarks
from pathlab.levy import LocalLevyModel, VarianceGamma, implied_vol, lewis_price
from pathlab.mc import MCConfig, call_prices, simulate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--which", choices=["merton", "vg", "vg-fitted"], default="merton")
    ap.add_argument("--paths", type=int, default=0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    if args.which == "merton":
        model, rows = benchmarks.cev_merton(), benchmarks.MERTON_ROWS
    else:
        model, rows = benchmarks.cev_vg(), benchmarks.VG_ROWS
        if args.which == "vg-fitted":
            model = LocalLevyModel(model.local_vol, VarianceGamma(1.0, -0.5, 0.2), model.r)

    mc = {}
    if args.paths:
        t0 = time.time()
        mats = sorted({r.T for r in rows})
        ens = simulate(model, MCConfig(n_paths=args.paths, seed=args.seed, horizon=mats[-1]), 0.0, mats)
        mc = call_prices(ens, model.r, {T: [r.K for r in rows if r.T == T] for T in mats})
        print(f"# MC: {args.paths} paths in {time.time() - t0:.0f}s")

    print(f"{'T':>5} {'K':>5} {'ours':>8} {'ref':>8} {'gap':>9} {'iv':>6} {'ref iv':>6}  mc 95%")
    for r in rows:
        p = lewis_price(model, 4, r.K, 0.0, 1.0, r.T)
        iv = 100 * implied_vol(p, r.K, r.T, 1.0, model.r)
        ci = ""
        if mc:
            lo, hi = mc[r.T, r.K].ci95
            ci = f"[{lo:.5f}, {hi:.5f}] vs [{r.mc_lo:.5f}, {r.mc_hi:.5f}]"
        print(f"{r.T:5g} {r.K:5g} {p:8.5f} {r.price:8.5f} {p - r.price:+9.1e} {iv:6.2f} {r.iv:6.2f}  {ci}")


if __name__ == "__main__":
    main()

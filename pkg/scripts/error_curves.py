"""RMS price error by expansion order against Monte Carlo, CEV-Merton, short maturities."""
import argparse

from pathlab import benchmarks
from pathlab.levy import convergence_order_scan
from pathlab.mc import MCConfig, call_prices, simulate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    model = benchmarks.cev_merton()
    mats = [1 / 12, 1 / 6, 1 / 4, 1 / 2]
    strikes = [0.8, 0.9, 1.0, 1.1, 1.2]
    ens = simulate(model, MCConfig(n_paths=args.paths, steps_per_year=240, seed=args.seed, horizon=0.5), 0.0, mats)
    raw = call_prices(ens, model.r, {T: strikes for T in mats})
    scan = convergence_order_scan(model, {(float(T), K): v for (T, K), v in raw.items()})
    print("   T   " + " ".join(f"order {n:<3}" for n in range(5)) + "  3 x se")
    for T, errs in scan.errors.items():
        print(f"{T:6.4f} " + " ".join(f"{e:9.2e}" for e in errs) + f"  {scan.noise[T]:.2e}")
    print("violations:", scan.violations())


if __name__ == "__main__":
    main()

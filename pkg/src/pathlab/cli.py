"""pathlab <subcommand> [--config file.json] [flags]

Flags are overlaid on the config (or on defaults) and the merged config is what runs;
--dump-config writes it back out.  Exit codes: 2 schema, 3 tolerance, 4 I/O.
"""
from __future__ import annotations

import json
import sys

import click

from .config import RunConfig, SchemaError
from .experiments import ToleranceFailure, run

EXIT_SCHEMA, EXIT_TOLERANCE, EXIT_IO = 2, 3, 4


def _base(experiment: str, config_path):
    if config_path is None:
        return RunConfig(experiment)
    cfg = RunConfig.load(config_path)
    if cfg.experiment != experiment:
        raise SchemaError(f"config is for {cfg.experiment!r}, not {experiment!r}")
    return cfg


def _execute(experiment: str, config_path, overlay, dump_config=None):
    try:
        cfg = _base(experiment, config_path)
        overlay(cfg)
        cfg.validate()
        if dump_config:
            cfg.save(dump_config)
        summary = run(cfg)
    except SchemaError as e:
        click.echo(f"schema error: {e}", err=True)
        sys.exit(EXIT_SCHEMA)
    except ToleranceFailure as e:
        click.echo(json.dumps(e.summary, indent=2, sort_keys=True, default=float))
        click.echo(f"tolerance failure: {e}", err=True)
        sys.exit(EXIT_TOLERANCE)
    except OSError as e:
        click.echo(f"I/O error: {e}", err=True)
        sys.exit(EXIT_IO)
    click.echo(json.dumps(summary, indent=2, sort_keys=True, default=float))


def _set(block: dict, key: str, value):
    if value is not None:
        block[key] = value


config_opt = click.option("--config", "config_path", type=click.Path(), default=None, help="JSON run config.")
dump_opt = click.option("--dump-config", type=click.Path(), default=None, help="Write the merged config here.")
seed_opt = click.option("--seed", type=int, default=None)


@click.group()
def main():
    """Pathwise hedging and local Levy pricing experiments."""


@main.command()
@config_opt
@dump_opt
@click.option("--input", "input_path", type=click.Path(), default=None, help="CSV with time,value[,jump].")
@click.option("--level", type=int, default=None)
@click.option("--tol", type=float, default=None)
@click.option("--output", type=click.Path(), default=None, help="JSON summary path.")
def qv(config_path, dump_config, input_path, level, tol, output):
    """Quadratic variation along dyadic partitions."""

    def overlay(c):
        _set(c.params, "input", input_path)
        _set(c.partition, "max_level", level)
        _set(c.partition, "tol", tol)
        _set(c.output, "json", output)

    _execute("qv", config_path, overlay, dump_config)


def _bs_overlay(c, sigma, T, payoff, K, U):
    if sigma is not None or T is not None or not c.model:
        c.model = {"kind": "bs", "sigma": sigma if sigma is not None else c.model.get("sigma", 0.2), "T": T if T is not None else c.model.get("T", 1.0)}
    if payoff is not None or not c.payoff:
        c.payoff = {"kind": payoff or c.payoff.get("kind", "european"), "K": K if K is not None else c.payoff.get("K", 1.0)}
        if U is not None:
            c.payoff["U"] = U
    else:
        _set(c.payoff, "K", K)
        _set(c.payoff, "U", U)


payoff_opt = click.option("--payoff", type=click.Choice(["european", "european-put", "geom-asian", "arith-asian", "barrier"]), default=None)


@main.command()
@config_opt
@dump_opt
@payoff_opt
@click.option("--sigma", type=float, default=None)
@click.option("--T", "T", type=float, default=None)
@click.option("--K", "K", type=float, default=None)
@click.option("--U", "U", type=float, default=None)
@click.option("--t", "t", type=float, default=None)
@click.option("--spot", type=float, default=None)
@click.option("--input", "input_path", type=click.Path(), default=None)
@click.option("--output", type=click.Path(), default=None)
def greeks(config_path, dump_config, payoff, sigma, T, K, U, t, spot, input_path, output):
    """Value and pathwise derivatives of a pricing functional."""

    def overlay(c):
        _bs_overlay(c, sigma, T, payoff, K, U)
        _set(c.params, "t", t)
        _set(c.params, "S", spot)
        _set(c.params, "input", input_path)
        _set(c.output, "json", output)

    _execute("greeks", config_path, overlay, dump_config)


@main.command()
@config_opt
@dump_opt
@seed_opt
@click.option("--model", type=click.Choice(["bs"]), default=None)
@payoff_opt
@click.option("--K", "K", type=float, default=None)
@click.option("--U", "U", type=float, default=None)
@click.option("--T", "T", type=float, default=None)
@click.option("--paths", type=int, default=None)
@click.option("--sigma-model", type=float, default=None)
@click.option("--sigma-true", type=float, default=None)
@click.option("--level", type=int, default=None)
@click.option("--min-robust-frequency", type=float, default=None)
@click.option("--output", type=click.Path(), default=None, help="Batch CSV path.")
def hedge(config_path, dump_config, seed, model, payoff, K, U, T, paths, sigma_model, sigma_true, level, min_robust_frequency, output):
    """Delta-hedge GBM paths with a Black-Scholes functional."""

    def overlay(c):
        _bs_overlay(c, sigma_model, T, payoff, K, U)
        _set(c.params, "paths", paths)
        _set(c.params, "sigma_true", sigma_true)
        _set(c.params, "min_robust_frequency", min_robust_frequency)
        _set(c.partition, "level", level)
        _set(c.output, "csv", output)
        if seed is not None:
            c.seed = seed
        elif c.seed is None:
            c.seed = 1

    _execute("hedge", config_path, overlay, dump_config)


def _levy_overlay(c, model):
    if model is not None:
        c.model = {"kind": {"merton": "cev-merton", "vg": "cev-vg"}.get(model, model)}
    elif not c.model:
        c.model = {"kind": "cev-merton"}


levy_model_opt = click.option("--model", type=click.Choice(["merton", "vg"]), default=None)


@main.command("price-expansion")
@config_opt
@dump_opt
@levy_model_opt
@click.option("--order", type=int, default=None)
@click.option("--T", "T", type=float, default=None)
@click.option("--K", "K", type=float, multiple=True)
@click.option("--output", type=click.Path(), default=None)
def price_expansion(config_path, dump_config, model, order, T, K, output):
    """Call prices from the n-th order expansion by Fourier inversion."""

    def overlay(c):
        _levy_overlay(c, model)
        _set(c.params, "order", order)
        _set(c.params, "T", T)
        if K:
            c.params["K"] = list(K)
        _set(c.output, "json", output)

    _execute("price-expansion", config_path, overlay, dump_config)


@main.command("price-mc")
@config_opt
@dump_opt
@seed_opt
@levy_model_opt
@click.option("--T", "T", type=float, default=None)
@click.option("--K", "K", type=float, multiple=True)
@click.option("--paths", type=int, default=None)
@click.option("--steps-per-year", type=int, default=None)
@click.option("--output", type=click.Path(), default=None)
def price_mc(config_path, dump_config, seed, model, T, K, paths, steps_per_year, output):
    """Euler Monte Carlo call prices with confidence intervals."""

    def overlay(c):
        _levy_overlay(c, model)
        _set(c.params, "T", T)
        if K:
            c.params["K"] = list(K)
        _set(c.mc, "n_paths", paths)
        _set(c.mc, "steps_per_year", steps_per_year)
        _set(c.output, "json", output)
        c.seed = seed if seed is not None else (c.seed if c.seed is not None else 1)

    _execute("price-mc", config_path, overlay, dump_config)


@main.command("reproduce-table")
@config_opt
@dump_opt
@seed_opt
@click.option("--which", type=click.Choice(["merton", "vg"]), default=None)
@click.option("--paths", type=int, default=None, help="MC paths; 0 skips the MC columns.")
@click.option("--output", type=click.Path(), default=None, help="CSV path.")
def reproduce_table(config_path, dump_config, seed, which, paths, output):
    """Fourth-order prices and MC intervals for the benchmark strikes."""

    def overlay(c):
        _set(c.params, "which", which)
        _set(c.mc, "n_paths", paths)
        _set(c.output, "csv", output)
        c.seed = seed if seed is not None else (c.seed if c.seed is not None else 1)

    _execute("reproduce-table", config_path, overlay, dump_config)


@main.command("error-curves")
@config_opt
@dump_opt
@seed_opt
@levy_model_opt
@click.option("--paths", type=int, default=None)
@click.option("--output", type=click.Path(), default=None, help="CSV path.")
def error_curves(config_path, dump_config, seed, model, paths, output):
    """Price error by expansion order against Monte Carlo."""

    def overlay(c):
        _levy_overlay(c, model)
        _set(c.mc, "n_paths", paths)
        _set(c.output, "csv", output)
        c.seed = seed if seed is not None else (c.seed if c.seed is not None else 1)

    _execute("error-curves", config_path, overlay, dump_config)


if __name__ == "__main__":
    main()

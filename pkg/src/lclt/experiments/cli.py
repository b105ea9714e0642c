"""lclt command line: run / validate / calibrate.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import sys

import click

from ..errors import ConfigError, NumericalFailureError
from ..transport import noise_floor
from .config import load_config, validate_config
from .runner import run_experiment

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@click.group()
def main():
    """Langevin Monte Carlo normal-approximation laboratory."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
              help="output directory (defaults to the config's output_dir or 'out')")
@click.option("--seed", default=None, type=int, help="override the config seed")
@click.option("--threads", default=1, type=int, show_default=True)
@click.option("--svg", is_flag=True, help="also write a minimal log-log chart")
def run(config_path, out_dir, seed, threads, svg):
    """Run one scenario config and write results.csv + manifest.json."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg.seed = seed
            cfg.raw["seed"] = seed
        target = out_dir or cfg.output_dir or "out"
        run_experiment(cfg, target, threads=threads, svg=svg)
    except ConfigError as exc:
        click.echo(f"invalid config: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except NumericalFailureError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(f"wrote {target}/results.csv")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def validate(config_path):
    """Validate a config file without running it."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"invalid config: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    errors = validate_config(cfg)
    if errors:
        for err in errors:
            click.echo(f"invalid config: {err}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo("config ok")


@main.command()
@click.option("--d", required=True, type=int)
@click.option("--m", required=True, type=int)
@click.option("--seeds", required=True, type=int)
@click.option("--p", default=1, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def calibrate(d, m, seeds, p, seed):
    """Empirical-transport noise floor: W_p between two size-m normal samples."""
    try:
        floor = noise_floor(m, d, p, seeds, seed0=seed)
    except ConfigError as exc:
        click.echo(f"invalid config: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except NumericalFailureError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(f"noise_floor_mean={floor['mean']!r}")
    click.echo(f"noise_floor_std={floor['std']!r}")
    click.echo(f"noise_floor_threshold={floor['threshold']!r}")


if __name__ == "__main__":
    main()

"""Experiment configuration: TOML schema, validation, grid expansion.

One scenario per config file.  The step-size/iteration schedule supports both
directions of n = floor(eta^{-p}): given p and n_list, eta = n^{-1/p}; given
p and eta_list, n = floor(eta^{-p}); a fixed eta with n_list runs a
constant-step grid.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..potentials import (
    KIND_LOGCOSH,
    KIND_QUADRATIC,
    PotentialSpec,
    logcosh_potential,
    potential_from_config,
    quadratic_potential,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIOS = (
    "linear_exact_rate",
    "linear_mc_rate",
    "nonlinear_rate",
    "moment_growth",
    "pair_scaling",
    "decomposition_check",
    "jacobi_contraction",
    "sigma_convergence",
)

_QUADRATIC_ONLY = {"linear_exact_rate", "linear_mc_rate", "sigma_convergence"}
_LOGCOSH_ONLY = {"nonlinear_rate", "moment_growth"}
# scenarios whose grid has no (n, eta) axis
_TIME_AXIS_FREE = {"jacobi_contraction"}


@dataclass(frozen=True)
class GridPoint:
    d: int
    eta: float
    n: int
    p: float | None
    index: int


@dataclass
class ExperimentConfig:
    scenario: str
    potential: dict
    grid: dict
    replicas: int
    seed: int
    output_dir: str | None = None
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    try:
        return ExperimentConfig(
            scenario=raw["scenario"],
            potential=dict(raw["potential"]),
            grid=dict(raw.get("grid", {})),
            replicas=int(raw.get("replicas", 1)),
            seed=int(raw.get("seed", 0)),
            output_dir=raw.get("output_dir"),
            params=dict(raw.get("params", {})),
            raw=raw,
        )
    except KeyError as exc:
        raise ConfigError(f"config missing required key {exc}") from exc


def _build_potential(cfg: ExperimentConfig, d: int | None = None) -> PotentialSpec:
    pot = cfg.potential
    kind = pot.get("kind")
    if kind == "quadratic":
        if d is not None and ("a_min" in pot or "a_max" in pot):
            a_min = float(pot.get("a_min", 1.0))
            a_max = float(pot.get("a_max", 2.0))
            diag = np.linspace(a_min, a_max, d) if d > 1 else np.array([a_min])
            return quadratic_potential(diag)
        return potential_from_config(pot)
    if kind == "logcosh":
        if d is not None:
            return logcosh_potential(float(pot.get("alpha", 1.0)), float(pot.get("eps", 0.0)), d)
        return potential_from_config(pot)
    raise ConfigError(f"unknown potential kind {kind!r}")


def potential_for_point(cfg: ExperimentConfig, point: GridPoint) -> PotentialSpec:
    sweeps_d = bool(cfg.grid.get("d_list"))
    return _build_potential(cfg, d=point.d if sweeps_d else None)


def expand_grid(cfg: ExperimentConfig) -> list[GridPoint]:
    """Deterministic lexicographic expansion: d outer, then the (n, eta) axis."""
    grid = cfg.grid
    p = grid.get("p")
    n_list = grid.get("n_list")
    eta_list = grid.get("eta_list")
    eta_fixed = grid.get("eta")

    if n_list is not None and eta_list is not None:
        raise ConfigError("give n_list or eta_list, not both")
    pairs: list[tuple[int, float, float | None]] = []
    if cfg.scenario in _TIME_AXIS_FREE and n_list is None and eta_list is None:
        pairs.append((0, 0.0, None))
    elif n_list is not None:
        for n in n_list:
            n = int(n)
            if p is not None:
                pairs.append((n, float(n) ** (-1.0 / float(p)), float(p)))
            elif eta_fixed is not None:
                pairs.append((n, float(eta_fixed), None))
            else:
                raise ConfigError("n_list needs either p (schedule) or a fixed eta")
    elif eta_list is not None:
        if p is None:
            raise ConfigError("eta_list needs p for the n = floor(eta^-p) schedule")
        for eta in eta_list:
            eta = float(eta)
            pairs.append((int(math.floor(eta ** (-float(p)))), eta, float(p)))
    else:
        raise ConfigError("grid needs n_list or eta_list")

    if grid.get("d_list"):
        d_values = [int(d) for d in grid["d_list"]]
    else:
        base = _build_potential(cfg)
        d_values = [base.dim]

    points = []
    index = 0
    for d in d_values:
        for n, eta, p_used in pairs:
            points.append(GridPoint(d=d, eta=eta, n=n, p=p_used, index=index))
            index += 1
    return points


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Collect human-readable validation errors; empty list means valid."""
    errors: list[str] = []
    if cfg.scenario not in SCENARIOS:
        errors.append(f"unknown scenario {cfg.scenario!r}; choose one of {', '.join(SCENARIOS)}")
        return errors
    kind = cfg.potential.get("kind")
    if cfg.scenario in _QUADRATIC_ONLY and kind != KIND_QUADRATIC:
        errors.append(f"scenario {cfg.scenario} needs a quadratic potential, got {kind!r}")
    if cfg.scenario in _LOGCOSH_ONLY and kind != KIND_LOGCOSH:
        errors.append(f"scenario {cfg.scenario} needs a logcosh potential, got {kind!r}")
    if cfg.replicas < 1:
        errors.append("replicas must be >= 1")
    if cfg.scenario in ("pair_scaling", "moment_growth") and cfg.replicas < 2:
        errors.append(f"scenario {cfg.scenario} needs replicas >= 2 for standard errors")
    if cfg.seed < 0:
        errors.append("seed must be a nonnegative 64-bit integer")
    p = cfg.grid.get("p")
    if p is not None and not (1.0 < float(p) < 3.0):
        errors.append(f"schedule exponent p={p} must lie in (1, 3)")
    if errors:
        return errors
    try:
        points = expand_grid(cfg)
    except ConfigError as exc:
        errors.append(str(exc))
        return errors
    if not points:
        errors.append("empty grid")
        return errors
    for point in points:
        try:
            spec = potential_for_point(cfg, point)
        except ConfigError as exc:
            errors.append(f"grid point {point.index}: {exc}")
            continue
        if point.d != spec.dim:
            errors.append(f"grid point {point.index}: d={point.d} but potential dim={spec.dim}")
        if cfg.scenario in _TIME_AXIS_FREE:
            h = float(cfg.params.get("h", 1e-3))
            cap = min(1e-2, 1.0 / (10.0 * spec.beta))
            if not (0.0 < h <= cap):
                errors.append(f"flow step h={h} must lie in (0, {cap:.4g}] for beta={spec.beta}")
            continue
        if not (0.0 < point.eta < spec.eta_max):
            errors.append(
                f"grid point {point.index}: eta={point.eta:.6g} outside (0, alpha/(2 beta^2)) "
                f"= (0, {spec.eta_max:.6g})"
            )
    return errors

"""Experiment orchestration: grid dispatch, CSV/manifest/SVG artifacts.

results.csv is byte-identical across reruns of the same manifest: rows are
assembled in deterministic grid order whatever the worker scheduling, and
floats are written with repr (shortest round-trip form).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .. import __version__
from ..errors import ConfigError
from ..rng import RNG_ALGORITHM
from .config import ExperimentConfig, expand_grid, validate_config
from .scenarios import SCENARIO_RUNNERS, Row, point_seed, replica_seed
from .svg import write_loglog_svg

MANIFEST_SCHEMA_VERSION = 1
RESULT_COLUMNS = ("scenario", "d", "eta", "n", "p", "metric", "value", "stderr", "seed")
RATEFIT_COLUMNS = ("scenario", "metric", "xvar", "d", "slope", "intercept",
                   "r_squared", "points_used", "noise_floor_excluded", "reason")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: list[Row]) -> str:
    lines = [",".join(RESULT_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, col)) for col in RESULT_COLUMNS))
    return "\n".join(lines) + "\n"


def ratefits_to_csv(fits: list[dict]) -> str:
    lines = [",".join(RATEFIT_COLUMNS)]
    for fit in fits:
        lines.append(",".join(_fmt(fit.get(col)) for col in RATEFIT_COLUMNS))
    return "\n".join(lines) + "\n"


def make_pmap(threads: int):
    if threads <= 1:
        return lambda fn, items: [fn(item) for item in items]

    def pmap(fn, items):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))

    return pmap


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1, svg: bool = False) -> dict:
    """Validate, run the scenario, and write results.csv / manifest.json
    (and ratefit.csv / chart.svg where applicable).  Returns the artifacts."""
    errors = validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    points = expand_grid(cfg)
    runner = SCENARIO_RUNNERS[cfg.scenario]
    started = time.time()
    rows, fits = runner(cfg, points, make_pmap(threads))
    wall = time.time() - started

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_csv = rows_to_csv(rows)
    (out / "results.csv").write_text(results_csv)
    if fits:
        (out / "ratefit.csv").write_text(ratefits_to_csv(fits))

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "package_version": __version__,
        "scenario": cfg.scenario,
        "rng_algorithm": RNG_ALGORITHM,
        "config": cfg.raw,
        "seed": cfg.seed,
        "grid": [
            {"index": pt.index, "d": pt.d, "eta": pt.eta, "n": pt.n, "p": pt.p,
             "point_seed": point_seed(cfg.seed, pt.index),
             "replica_seeds": [replica_seed(point_seed(cfg.seed, pt.index), r)
                               for r in range(cfg.replicas)]}
            for pt in points
        ],
        "wall_time_s": wall,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    if svg:
        series: dict[str, list] = {}
        for row in rows:
            if row.n > 0 and row.value is not None and row.value > 0:
                series.setdefault(f"{row.metric} (d={row.d})", []).append((row.n, row.value))
        series = {k: v for k, v in series.items() if len(v) >= 2}
        if series:
            write_loglog_svg(out / "chart.svg", series, cfg.scenario)

    return {"rows": rows, "fits": fits, "results_csv": results_csv, "manifest": manifest}

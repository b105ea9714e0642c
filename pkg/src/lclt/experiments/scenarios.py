"""Scenario implementations composing the core modules into rate curves.

Each scenario maps the expanded grid to CSV rows with the fixed schema
(scenario, d, eta, n, p, metric, value, stderr, seed) plus optional rate-fit
rows.  All randomness derives from the config seed: grid point i uses
seed XOR (i << 32), replica r of a point XORs r on top, so reruns of the
same manifest are byte-identical regardless of worker scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..chain import (
    ChainConfig,
    START_GAUSSIAN_EXACT,
    START_WARMUP,
    simulate,
    simulate_batch,
    stationary_fourth_moment,
    stationary_cov,
)
from ..decomposition import decompose
from ..errors import ConfigError
from ..linear import LinearCaseModel, exact_w2_to_gamma, covariance_gap_ratio
from ..pairs import conditional_mean_check, d_delta_moments, draw_pair_batch, stein_bound_rhs, xi_components
from ..potentials import KIND_QUADRATIC
from ..spd import inv_sqrt_spd
from ..stein import build_field, exact_sigma, jacobi_flow, solve_linear
from ..transport import EXACT_SIZE_CAP, SampleCloud, gamma_cloud, noise_floor, w1_sliced, w_to_gamma
from .config import ExperimentConfig, GridPoint, potential_for_point
from .ratefit import RateFit, fit_rate


@dataclass(frozen=True)
class Row:
    scenario: str
    d: int
    eta: float
    n: int
    p: float | None
    metric: str
    value: float
    stderr: float | None
    seed: int


def point_seed(base_seed: int, index: int) -> int:
    return int(np.uint64(base_seed) ^ (np.uint64(index) << np.uint64(32)))


def replica_seed(pt_seed: int, replica: int) -> int:
    return int(np.uint64(pt_seed) ^ np.uint64(replica))


def _fit_row(fit: RateFit, scenario: str, metric: str, xvar: str, d: int) -> dict:
    return {
        "scenario": scenario, "metric": metric, "xvar": xvar, "d": d,
        "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
        "points_used": fit.points_used, "noise_floor_excluded": fit.noise_floor_excluded,
        "reason": fit.reason or "",
    }


# ---------------------------------------------------------------------------
# closed-form linear scenarios


def _linear_model(cfg: ExperimentConfig, point: GridPoint):
    spec = potential_for_point(cfg, point)
    if spec.kind != KIND_QUADRATIC:
        raise ConfigError("linear scenarios need a quadratic potential")
    sigma0 = stationary_cov(spec.a, point.eta)
    return spec, LinearCaseModel(a=spec.a, eta=point.eta, n=point.n, sigma0=sigma0, start_gaussian=True)


def run_linear_exact_rate(cfg: ExperimentConfig, points, pmap):
    def one(point: GridPoint):
        _, model = _linear_model(cfg, point)
        return exact_w2_to_gamma(model)

    values = pmap(one, points)
    rows = [
        Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "w2_exact", val, None, point_seed(cfg.seed, pt.index))
        for pt, val in zip(points, values)
    ]
    fit = fit_rate([(pt.n, val) for pt, val in zip(points, values)])
    return rows, [_fit_row(fit, cfg.scenario, "w2_exact", "n", points[0].d)]


def run_sigma_convergence(cfg: ExperimentConfig, points, pmap):
    def one(point: GridPoint):
        _, model = _linear_model(cfg, point)
        return covariance_gap_ratio(model)

    results = pmap(one, points)
    rows = []
    for pt, res in zip(points, results):
        seed = point_seed(cfg.seed, pt.index)
        rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "opnorm_gap", res["op_norm_gap"], None, seed))
        rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "bound_ratio", res["bound_ratio"], None, seed))
    fit = fit_rate([(pt.n * pt.eta, res["op_norm_gap"]) for pt, res in zip(points, results)])
    return rows, [_fit_row(fit, cfg.scenario, "opnorm_gap", "neta", points[0].d)]


# ---------------------------------------------------------------------------
# empirical Wasserstein rate scenarios


def _w_n_cloud(spec, point: GridPoint, m: int, seed: int, start: str) -> np.ndarray:
    config = ChainConfig(eta=point.eta, n=point.n, d=point.d, seed=seed, start=start)
    batch = simulate_batch(spec, config, replicas=m)
    return math.sqrt(point.eta / point.n) * batch["sum_states"]


def _empirical_rate(cfg: ExperimentConfig, points, pmap, start: str, metric: str):
    params = cfg.params
    m = int(params.get("m", 2048 if metric == "w1_empirical" else 1024))
    wp = int(params.get("wp", 1 if metric == "w1_empirical" else 2))
    reps = int(params.get("cloud_replicates", 4))
    floor_seeds = int(params.get("floor_seeds", 8))

    # the exact solver is capped; larger clouds fall back to the sliced
    # estimator with a warning row
    sliced_mode = m > EXACT_SIZE_CAP
    projections = int(params.get("projections", 64))

    rows = []
    if sliced_mode:
        rows.append(Row(cfg.scenario, points[0].d, 0.0, 0, None, "exact_cap_warning",
                        float(EXACT_SIZE_CAP), None, cfg.seed))
    floors: dict[int, dict] = {}
    floor_m = min(m, EXACT_SIZE_CAP)
    for d in sorted({pt.d for pt in points}):
        floors[d] = noise_floor(floor_m, d, wp, floor_seeds, seed0=point_seed(cfg.seed, 1 << 20))
        rows.append(Row(cfg.scenario, d, 0.0, 0, None, "noise_floor", floors[d]["mean"],
                        floors[d]["std"], cfg.seed))

    def one(point: GridPoint):
        spec = potential_for_point(cfg, point)
        if spec.kind == KIND_QUADRATIC:
            sigma_is = inv_sqrt_spd(exact_sigma(solve_linear(spec.a))).entries
        else:
            sigma_is = inv_sqrt_spd(exact_sigma(build_field(spec))).entries
        pt_seed = point_seed(cfg.seed, point.index)
        vals = np.empty(reps)
        for rep in range(reps):
            seed = int(np.uint64(pt_seed) ^ (np.uint64(rep + 1) << np.uint64(48)))
            w_samples = _w_n_cloud(spec, point, m, seed, start)
            cloud = SampleCloud(w_samples @ sigma_is.T)
            if sliced_mode:
                vals[rep] = w1_sliced(cloud, gamma_cloud(m, point.d, seed), projections, seed)["estimate"]
            else:
                vals[rep] = w_to_gamma(cloud, wp, seed)
        stderr = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        return float(vals.mean()), stderr

    results = pmap(one, points)
    for pt, (val, se) in zip(points, results):
        rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, metric, val, se,
                        point_seed(cfg.seed, pt.index)))
    fits = []
    for d in sorted({pt.d for pt in points}):
        pts_d = [(pt.n, val) for pt, (val, _) in zip(points, results) if pt.d == d]
        fits.append(_fit_row(fit_rate(pts_d, floor=floors[d]["threshold"]),
                             cfg.scenario, metric, "n", d))
    return rows, fits


def run_linear_mc_rate(cfg: ExperimentConfig, points, pmap):
    return _empirical_rate(cfg, points, pmap, START_GAUSSIAN_EXACT, "w2_empirical")


def run_nonlinear_rate(cfg: ExperimentConfig, points, pmap):
    return _empirical_rate(cfg, points, pmap, START_WARMUP, "w1_empirical")


# ---------------------------------------------------------------------------
# chain moment growth


def run_moment_growth(cfg: ExperimentConfig, points, pmap):
    def one(point: GridPoint):
        spec = potential_for_point(cfg, point)
        config = ChainConfig(eta=point.eta, n=point.n, d=point.d,
                             seed=point_seed(cfg.seed, point.index), start=START_WARMUP)
        return stationary_fourth_moment(spec, config, replicas=cfg.replicas)

    results = pmap(one, points)
    rows = [
        Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "fourth_moment",
            res["estimate"], res["stderr"], point_seed(cfg.seed, pt.index))
        for pt, res in zip(points, results)
    ]
    fit = fit_rate([(pt.d, res["estimate"]) for pt, res in zip(points, results)])
    return rows, [_fit_row(fit, cfg.scenario, "fourth_moment", "d", 0)]


# ---------------------------------------------------------------------------
# exchangeable-pair scaling


def run_pair_scaling(cfg: ExperimentConfig, points, pmap):
    draws_total = int(cfg.params.get("draws", 1000))
    runs = cfg.replicas
    draws_per_run = max(2, draws_total // runs)

    def one(point: GridPoint):
        spec = potential_for_point(cfg, point)
        field = build_field(spec) if spec.kind != KIND_QUADRATIC else solve_linear(spec.a)
        sigma = exact_sigma(field)
        sigma_is = inv_sqrt_spd(sigma).entries
        start = START_GAUSSIAN_EXACT if spec.kind == KIND_QUADRATIC else START_WARMUP
        pt_seed = point_seed(cfg.seed, point.index)
        lambdas, residuals, batches = [], [], []
        for r in range(runs):
            seed = replica_seed(pt_seed, r)
            run = simulate(spec, ChainConfig(eta=point.eta, n=point.n, d=point.d,
                                             seed=seed, start=start))
            check = conditional_mean_check(run, field, sigma_is)
            lambdas.append(check["lambda_hat"])
            residuals.append(check["residual_norm"])
            batches.append(draw_pair_batch(run, field, sigma_is, draws_per_run, seed))
        xi = xi_components(batches, field, sigma.entries, sigma_is)
        moments = d_delta_moments(batches)
        lam = float(np.mean(lambdas))
        rhs = stein_bound_rhs(lam, moments["m2log"], xi["xi_hs_mean"])
        lam_stderr = float(np.std(lambdas, ddof=1) / math.sqrt(runs))
        return {
            "lambda_hat": (lam, lam_stderr),
            "residual": (float(np.max(residuals)), None),
            "R1": (xi["R1_hat"], xi["R1_stderr"]),
            "R2": (xi["R2_hat"], xi["R2_stderr"]),
            "R3": (xi["R3_hat"], xi["R3_stderr"]),
            "xi_hs": (xi["xi_hs_mean"], xi["xi_hs_stderr"]),
            "m2": (moments["m2"], moments["m2_stderr"]),
            "m2log": (moments["m2log"], moments["m2log_stderr"]),
            "rhs": (rhs, None),
        }

    results = pmap(one, points)
    rows = []
    for pt, res in zip(points, results):
        seed = point_seed(cfg.seed, pt.index)
        for metric, (value, stderr) in res.items():
            rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, metric, value, stderr, seed))
    fit = fit_rate([(pt.n, res["m2"][0]) for pt, res in zip(points, results)])
    return rows, [_fit_row(fit, cfg.scenario, "m2", "n", points[0].d)]


# ---------------------------------------------------------------------------
# decomposition identity


def run_decomposition_check(cfg: ExperimentConfig, points, pmap):
    replicas = cfg.replicas

    def one(point: GridPoint):
        spec = potential_for_point(cfg, point)
        field = solve_linear(spec.a) if spec.kind == KIND_QUADRATIC else build_field(spec)
        start = START_GAUSSIAN_EXACT if spec.kind == KIND_QUADRATIC else START_WARMUP
        pt_seed = point_seed(cfg.seed, point.index)
        terms = {name: [] for name in ("h", "r1", "r2", "r3", "r4", "r5", "r6", "r_total", "residual")}
        for r in range(replicas):
            run = simulate(spec, ChainConfig(eta=point.eta, n=point.n, d=point.d,
                                             seed=replica_seed(pt_seed, r), start=start))
            res = decompose(run, field)
            terms["h"].append(np.linalg.norm(res.h_n))
            for j in range(6):
                terms[f"r{j + 1}"].append(np.linalg.norm(res.r_terms[j]))
            terms["r_total"].append(np.linalg.norm(res.r_total))
            terms["residual"].append(np.abs(res.residual).max())
        return terms

    results = pmap(one, points)
    rows = []
    for pt, terms in zip(points, results):
        seed = point_seed(cfg.seed, pt.index)
        for name, vals in terms.items():
            arr = np.asarray(vals)
            stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else None
            rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, name, float(arr.mean()), stderr, seed))
        rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "residual_max",
                        float(np.max(terms["residual"])), None, seed))
    return rows, []


# ---------------------------------------------------------------------------
# Jacobi flow contraction band


def run_jacobi_contraction(cfg: ExperimentConfig, points, pmap):
    params = cfg.params
    horizon = float(params.get("T", 10.0))
    h = float(params.get("h", 1e-3))
    paths = int(params.get("paths", max(1, cfg.replicas)))

    def one(point: GridPoint):
        spec = potential_for_point(cfg, point)
        pt_seed = point_seed(cfg.seed, point.index)
        x0 = np.zeros(spec.dim)
        lower_margin = math.inf
        upper_margin = math.inf
        expm_err = None
        for path in range(paths):
            flow = jacobi_flow(spec, x0, horizon, h, seed=replica_seed(pt_seed, path))
            flows = flow["flows"]
            ops = np.sqrt(np.linalg.eigvalsh(
                np.einsum("kba,kbc->kac", flows, flows))[:, -1])
            t = flow["times"]
            lower = np.exp(-spec.beta * t) * (1.0 - 10.0 * h * spec.beta)
            upper = np.exp(-spec.alpha * t) * (1.0 + 10.0 * h * spec.beta)
            lower_margin = min(lower_margin, float((ops - lower).min()))
            upper_margin = min(upper_margin, float((upper - ops).min()))
        if spec.kind == KIND_QUADRATIC:
            t_check = float(params.get("t_check", 1.0))
            flow = jacobi_flow(spec, x0, t_check, h, seed=pt_seed)
            target = spec.a.apply_spectral(lambda lam: np.exp(-lam * t_check)).entries
            num = np.linalg.norm(flow["flows"][-1] - target)
            expm_err = float(num / np.linalg.norm(target))
        return lower_margin, upper_margin, expm_err

    results = pmap(one, points)
    rows = []
    for pt, (lo, hi, expm_err) in zip(points, results):
        seed = point_seed(cfg.seed, pt.index)
        rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "band_margin_lower", lo, None, seed))
        rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "band_margin_upper", hi, None, seed))
        if expm_err is not None:
            rows.append(Row(cfg.scenario, pt.d, pt.eta, pt.n, pt.p, "expm_rel_err", expm_err, None, seed))
    return rows, []


SCENARIO_RUNNERS = {
    "linear_exact_rate": run_linear_exact_rate,
    "sigma_convergence": run_sigma_convergence,
    "linear_mc_rate": run_linear_mc_rate,
    "nonlinear_rate": run_nonlinear_rate,
    "moment_growth": run_moment_growth,
    "pair_scaling": run_pair_scaling,
    "decomposition_check": run_decomposition_check,
    "jacobi_contraction": run_jacobi_contraction,
}

import math

import numpy as np
import pytest

from lclt.chain import ChainConfig, from_innovations, simulate
from lclt.decomposition import (
    compute_h_n,
    compute_r_terms,
    compute_w_n,
    decompose,
    remainder_norm_scan,
)
from lclt.errors import MissingDerivativeError
from lclt.linear import LinearCaseModel, w_n_from_innovations
from lclt.chain import stationary_cov
from lclt.potentials import logcosh_potential, quadratic_potential
from lclt.stein import TrajectoryField, build_field

LC1 = logcosh_potential(1.0, 0.5, 1)


def test_identity_quadratic():
    for d, seed in ((1, 0), (4, 1), (10, 2)):
        spec = quadratic_potential(np.linspace(1.0, 2.0, d))
        field = build_field(spec)
        run = simulate(spec, ChainConfig(eta=0.05, n=2048, d=d, seed=seed, start="gaussian_exact"))
        res = decompose(run, field)
        assert np.abs(res.residual).max() <= 1e-10
        # vanishing higher derivatives: only the boundary term survives
        assert np.all(res.r_terms[1:] == 0.0)


def test_identity_logcosh():
    field = build_field(LC1)
    for seed in range(3):
        run = simulate(LC1, ChainConfig(eta=0.05, n=512, d=1, seed=seed, start="warmup"))
        res = decompose(run, field)
        assert np.abs(res.residual).max() <= 1e-5


def test_r_total_sign_convention():
    field = build_field(LC1)
    run = simulate(LC1, ChainConfig(eta=0.05, n=64, d=1, seed=5, start="warmup"))
    res = decompose(run, field)
    assert np.allclose(res.r_total, -res.r_terms.sum(axis=0))
    assert np.allclose(res.residual, res.w_n - res.h_n - res.r_total)


def test_w_n_single_step():
    run = simulate(LC1, ChainConfig(eta=0.09, n=1, d=1, seed=3, start="warmup"))
    w = compute_w_n(run, np.zeros(1))
    assert w[0] == pytest.approx(math.sqrt(0.09) * run.states[0, 0], abs=1e-15)
    shifted = compute_w_n(run, np.array([0.5]))
    assert shifted[0] == pytest.approx(math.sqrt(0.09) * (run.states[0, 0] - 0.5), abs=1e-15)


def test_h_n_zero_innovations():
    cfg = ChainConfig(eta=0.05, n=32, d=2, seed=0, start="zero")
    spec = logcosh_potential(1.0, 0.5, 2)
    run = from_innovations(spec, cfg, np.array([1.0, -2.0]), np.zeros((32, 2)))
    assert np.all(compute_h_n(run, build_field(spec)) == 0.0)


def test_h_n_quadratic_closed_form():
    spec = quadratic_potential(np.array([1.0, 2.0]))
    field = build_field(spec)
    run = simulate(spec, ChainConfig(eta=0.05, n=128, d=2, seed=9, start="gaussian_exact"))
    n = run.n
    a_inv = np.diag([1.0, 0.5])
    expected = math.sqrt(2.0 / n) * run.innovations.sum(axis=0) @ a_inv
    assert np.abs(compute_h_n(run, field) - expected).max() <= 1e-12


def test_h_n_mean_zero_over_replicas():
    spec = quadratic_potential(np.array([1.0]))
    field = build_field(spec)
    vals = []
    for r in range(400):
        run = simulate(spec, ChainConfig(eta=0.1, n=32, d=1, seed=1000 ^ r, start="gaussian_exact"))
        vals.append(compute_h_n(run, field)[0])
    vals = np.asarray(vals)
    stderr = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean()) <= 3 * stderr


def test_w_n_matches_z_representation():
    spec = quadratic_potential(np.array([1.0]))
    eta, n = 0.1, 256
    run = simulate(spec, ChainConfig(eta=eta, n=n, d=1, seed=12, start="gaussian_exact"))
    model = LinearCaseModel(a=spec.a, eta=eta, n=n, sigma0=stationary_cov(spec.a, eta))
    w_repr = w_n_from_innovations(model, run.states[0], run.innovations)
    assert np.abs(compute_w_n(run, np.zeros(1)) - w_repr).max() <= 1e-10


def test_martingale_increment_orthogonal_to_past():
    # E[<grad phi(X_k), xi_{k+1}> f(X_k)] = 0 for bounded f
    spec = quadratic_potential(np.array([1.0]))
    field = build_field(spec)
    k = 10
    vals = []
    for r in range(600):
        run = simulate(spec, ChainConfig(eta=0.1, n=k + 1, d=1, seed=77 ^ r, start="gaussian_exact"))
        inc = field.grad_dot(run.states[k][None], run.innovations[k][None])[0, 0]
        vals.append(inc * math.tanh(run.states[k, 0]))
    vals = np.asarray(vals)
    stderr = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean()) <= 4 * stderr


def test_r2_increment_centered():
    field = build_field(LC1)
    k = 5
    vals = []
    for r in range(600):
        run = simulate(LC1, ChainConfig(eta=0.05, n=k + 1, d=1, seed=55 ^ r, start="warmup"))
        x = run.states[k][None]
        xi = run.innovations[k][None]
        vals.append((field.hess_pair(x, xi, xi) - field.hess_trace(x))[0, 0])
    vals = np.asarray(vals)
    stderr = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean()) <= 4 * stderr


def test_remainder_scan_rate_and_determinism():
    spec = quadratic_potential(np.array([1.0]))
    field = build_field(spec)
    grid = [(64, 0.1), (256, 0.1), (1024, 0.1)]
    rows = remainder_norm_scan(spec, field, grid, replicas=64, seed=4)
    rows2 = remainder_norm_scan(spec, field, grid, replicas=64, seed=4)
    assert rows == rows2
    # only the boundary term survives: E|R| ~ (n eta)^{-1/2}
    ratio1 = rows[0]["mean_abs"] / rows[1]["mean_abs"]
    ratio2 = rows[1]["mean_abs"] / rows[2]["mean_abs"]
    assert ratio1 == pytest.approx(2.0, rel=0.35)
    assert ratio2 == pytest.approx(2.0, rel=0.35)


def test_trajectory_field_rejected():
    spec = quadratic_potential(np.array([1.0]))
    run = simulate(spec, ChainConfig(eta=0.1, n=8, d=1, seed=1, start="gaussian_exact"))
    field = TrajectoryField(spec, horizon=20.0, paths=1, h=1e-3, seed=0)
    with pytest.raises(MissingDerivativeError):
        compute_r_terms(run, field)


def test_remainder_scan_logcosh_smoke():
    field = build_field(LC1)
    rows = remainder_norm_scan(LC1, field, [(64, 0.05), (256, 0.05)], replicas=8, seed=2)
    assert len(rows) == 2
    assert all(r["mean_abs"] > 0 and r["stderr"] >= 0 for r in rows)
    # remainder shrinks with n at fixed eta
    assert rows[1]["mean_abs"] < rows[0]["mean_abs"]

import math

import numpy as np
import pytest

from lclt.chain import ChainConfig, simulate, simulate_batch, stationary_cov
from lclt.errors import ConfigError
from lclt.linear import (
    LinearCaseModel,
    exact_w2_to_gamma,
    covariance_gap_ratio,
    sigma_infinity,
    sigma_n,
    w_n_from_innovations,
    z_coefficient,
)
from lclt.potentials import quadratic_potential
from lclt.spd import SpdMatrix, op_norm


def model_for(a_diag, eta, n, sigma0=None, start_gaussian=True):
    a = SpdMatrix(np.diag(a_diag))
    if sigma0 is None:
        sigma0 = stationary_cov(a, eta)
    return LinearCaseModel(a=a, eta=eta, n=n, sigma0=sigma0, start_gaussian=start_gaussian)


def test_z_coefficient_boundary_cases():
    m = model_for([1.0, 2.0], 0.05, 64)
    assert np.allclose(z_coefficient(m, m.n - 1), math.sqrt(2) * 0.05 * np.eye(2), atol=1e-14)
    big = model_for([1.0, 2.0], 0.05, 4096)
    limit = math.sqrt(2) * np.diag([1.0, 0.5])
    assert np.allclose(z_coefficient(big, 0), limit, atol=1e-10)


def test_z_coefficient_scalar_value():
    # d=1, a=1, eta=0.1, n-k=2: sqrt(2) (1 - 0.81)
    m = model_for([1.0], 0.1, 10)
    val = z_coefficient(m, 8)[0, 0]
    assert val == pytest.approx(math.sqrt(2) * (1 - 0.81), abs=1e-14)


def test_z_coefficient_bounds():
    m = model_for([1.0], 0.1, 4)
    with pytest.raises(ConfigError):
        z_coefficient(m, 4)
    with pytest.raises(ConfigError):
        z_coefficient(m, -1)


def test_sigma_n_single_step():
    sigma0 = SpdMatrix(np.diag([2.0, 0.7]))
    m = model_for([1.0, 2.0], 0.1, 1, sigma0=sigma0)
    assert np.allclose(sigma_n(m).entries, 0.1 * sigma0.entries, atol=1e-14)


def test_sigma_n_approaches_sigma_infinity():
    a = [1.0, 2.0]
    gaps = []
    for n in (256, 1024, 4096):
        m = model_for(a, 0.05, n)
        gaps.append(op_norm(sigma_n(m).entries - sigma_infinity(m.a).entries))
    # gap ~ C/(n eta): quartering n multiplies the gap by ~4
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.15)
    assert gaps[1] / gaps[2] == pytest.approx(4.0, rel=0.15)


def test_sigma_n_monte_carlo_cross_check():
    spec = quadratic_potential(np.array([1.0, 2.0]))
    eta, n, reps = 0.05, 64, 100_000
    cfg = ChainConfig(eta=eta, n=n, d=2, seed=17, start="gaussian_exact")
    batch = simulate_batch(spec, cfg, replicas=reps)
    w_samples = math.sqrt(eta / n) * batch["sum_states"]
    emp = np.cov(w_samples.T, bias=True)
    target = sigma_n(model_for([1.0, 2.0], eta, n)).entries
    stderr = np.abs(target).max() * math.sqrt(2.0 / reps)
    assert np.abs(emp - target).max() <= 4 * stderr


def test_sigma_infinity_examples():
    assert np.allclose(sigma_infinity(SpdMatrix(np.eye(3))).entries, 2 * np.eye(3))
    assert np.allclose(sigma_infinity(SpdMatrix(np.diag([1.0, 2.0]))).entries, np.diag([2.0, 0.5]))
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 4))
    a = SpdMatrix(m @ m.T + 2 * np.eye(4))
    w = sigma_infinity(a).eigenvalues
    alpha, beta = a.lambda_min(), a.lambda_max()
    assert np.all(w >= 2 / beta**2 - 1e-12) and np.all(w <= 2 / alpha**2 + 1e-12)


def test_sigma_n_is_spd():
    rng = np.random.default_rng(3)
    for _ in range(5):
        d = rng.integers(1, 5)
        diag = rng.uniform(1.0, 2.0, d)
        eta = 0.4 / (2 * diag.max() ** 2)
        m = model_for(diag, eta, int(rng.integers(2, 200)))
        assert sigma_n(m).lambda_min() > 0


def test_exact_w2_scalar_value():
    # d=1, a=1, eta=0.1, n=1, sigma0 = 2: Sigma_1 = 0.2, Sigma = 2
    m = model_for([1.0], 0.1, 1, sigma0=SpdMatrix([[2.0]]))
    assert exact_w2_to_gamma(m) == pytest.approx(1 - math.sqrt(0.1), abs=1e-12)


def test_exact_w2_zero_when_matched():
    # large n with stationary start: Sigma_n ~ Sigma, w2 small and positive
    m = model_for([1.0, 2.0], 0.05, 1 << 14)
    assert 0 <= exact_w2_to_gamma(m) < 1e-2


def test_exact_w2_synthetic_match_is_zero(monkeypatch):
    m = model_for([1.0, 2.0], 0.05, 64)
    target = sigma_infinity(m.a)
    monkeypatch.setattr("lclt.linear.sigma_n", lambda _: target)
    assert exact_w2_to_gamma(m) == 0.0


def test_exact_w2_requires_gaussian_start():
    m = model_for([1.0], 0.1, 4, start_gaussian=False)
    with pytest.raises(ConfigError):
        exact_w2_to_gamma(m)


def test_covariance_gap_brute_force_oracle():
    # d=1: sum the covariance series directly
    a, eta, n = 1.3, 0.07, 300
    sigma0 = 2.0 / (a * (2.0 - eta * a))
    b = 1.0 - eta * a
    first = (1.0 - b**n) ** 2 * sigma0 / (n * eta * a**2)
    series = sum((1.0 - b ** (n - i)) ** 2 for i in range(1, n)) * 2.0 / (n * a**2)
    brute_gap = abs(first + series - 2.0 / a**2)
    m = model_for([a], eta, n)
    res = covariance_gap_ratio(m)
    assert res["op_norm_gap"] == pytest.approx(brute_gap, rel=1e-10)
    assert res["bound_ratio"] == pytest.approx(brute_gap * n * eta, rel=1e-10)


def test_w_n_representation_matches_chain():
    spec = quadratic_potential(np.array([1.0, 2.0]))
    eta, n = 0.05, 128
    cfg = ChainConfig(eta=eta, n=n, d=2, seed=23, start="gaussian_exact")
    run = simulate(spec, cfg)
    w_direct = math.sqrt(eta / n) * run.states[:n].sum(axis=0)
    m = model_for([1.0, 2.0], eta, n)
    w_repr = w_n_from_innovations(m, run.states[0], run.innovations)
    assert np.abs(w_direct - w_repr).max() <= 1e-10


def test_coupling_gap_within_bound():
    from lclt.linear import coupling_gap_check

    # lambda_min(A) >= 1 makes the identity-pairing bound a theorem
    m = model_for([1.0, 2.0], 0.05, 256)
    out = coupling_gap_check(m, replicas=512, seed=19)
    assert 0.0 < out["w2_gap"] <= out["coupling_bound"]


def test_model_validation():
    with pytest.raises(ConfigError):
        model_for([1.0], 2.5, 4)  # not a contraction
    with pytest.raises(ConfigError):
        LinearCaseModel(a=SpdMatrix(np.diag([1.0, -1.0])), eta=0.1, n=4,
                        sigma0=SpdMatrix(np.eye(2)))


def test_sigma_n_two_steps_brute_force():
    a, eta = 1.4, 0.08
    sigma0 = 0.9
    b = 1.0 - eta * a
    first = (1.0 - b**2) ** 2 * sigma0 / (2 * eta * a**2)
    series = 2.0 / 2.0 * (1.0 - b) ** 2 / a**2
    m = model_for([a], eta, 2, sigma0=SpdMatrix([[sigma0]]))
    assert sigma_n(m).entries[0, 0] == pytest.approx(first + series, rel=1e-12)

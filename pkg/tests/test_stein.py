import numpy as np
import pytest

from lclt import rng
from lclt.errors import ConfigError, MissingDerivativeError
from lclt.potentials import (
    ScalarPotential,
    grad_u,
    logcosh_potential,
    quadratic_potential,
)
from lclt.spd import SpdMatrix
from lclt.stein import (
    LinearAnalyticField,
    ScalarSteinTable,
    SeparableQuadratureField,
    TrajectoryField,
    build_field,
    estimate_sigma,
    exact_sigma,
    grad_phi_trajectory,
    jacobi_flow,
    solve_linear,
    solve_separable_1d,
)

LC = ScalarPotential(a=1.0, eps=0.5)


@pytest.fixture(scope="module")
def lc_table():
    return solve_separable_1d(LC)


@pytest.fixture(scope="module")
def lc_field(lc_table):
    return SeparableQuadratureField([lc_table])


def test_solve_linear_values():
    f = solve_linear(SpdMatrix(np.diag([2.0])))
    assert f.grad_matrix(np.zeros(1))[0, 0] == pytest.approx(-0.5, abs=1e-14)
    f = solve_linear(SpdMatrix(np.eye(3)))
    assert np.allclose(f.grad_matrix(np.zeros(3)), -np.eye(3))


def test_linear_sigma_assembly():
    a = SpdMatrix(np.array([[2.0, 0.3], [0.3, 1.0]]))
    f = solve_linear(a)
    g = f.grad_matrix(np.zeros(2))
    a_inv = a.apply_spectral(lambda lam: 1.0 / lam).entries
    assert np.allclose(2 * g.T @ g, 2 * a_inv @ a_inv, atol=1e-12)
    assert np.allclose(exact_sigma(f).entries, 2 * a_inv @ a_inv, atol=1e-12)


def test_quadrature_reduces_to_linear():
    t1 = solve_separable_1d(ScalarPotential(a=1.0))
    grid = np.linspace(-9.9, 9.9, 2001)
    assert np.abs(t1.phi1(grid) + 1.0).max() <= 1e-8
    assert np.abs(t1.phi2(grid)).max() <= 1e-8
    assert np.abs(t1.phi3(grid)).max() <= 1e-7
    t2 = solve_separable_1d(ScalarPotential(a=2.0))
    assert np.abs(t2.phi1(grid) + 0.5).max() <= 1e-8


def test_quadrature_ode_residual_and_symmetry(lc_table):
    assert lc_table.ode_residual <= 1e-6
    # even potential: zero mean, even phi'
    assert abs(lc_table.mean) <= 1e-12
    x = np.linspace(0.1, 8.0, 200)
    assert np.abs(lc_table.phi1(x) - lc_table.phi1(-x)).max() <= 1e-9
    # independent residual check off the construction grid
    xs = np.linspace(-7.77, 7.77, 1111)
    resid = -LC.du(xs) * lc_table.phi1(xs) + lc_table.phi2(xs) - (xs - lc_table.mean)
    assert np.abs(resid).max() <= 1e-12


def test_quadrature_gradient_band(lc_table):
    xs = np.linspace(-9.9, 9.9, 3000)
    neg = -lc_table.phi1(xs)
    assert neg.min() >= 1.0 / LC.beta - 1e-8
    assert neg.max() <= 1.0 / LC.alpha + 1e-8


def test_quadrature_tail_mass_guard():
    with pytest.raises(ConfigError):
        solve_separable_1d(LC, halfwidth=2.0)


def test_table_save_load_round_trip(tmp_path, lc_table):
    path = tmp_path / "table.npz"
    lc_table.save(path)
    loaded = ScalarSteinTable.load(path)
    xs = np.linspace(-5, 5, 101)
    assert np.array_equal(loaded.phi1(xs), lc_table.phi1(xs))
    assert loaded.sigma_coord == lc_table.sigma_coord
    assert loaded.scalar == lc_table.scalar


def test_generator_identity_separable():
    spec = logcosh_potential(1.0, 0.5, 2)
    field = build_field(spec)
    gen = np.random.default_rng(5)
    x = gen.uniform(-3, 3, (40, 2))
    lhs = -field.grad_dot(x, grad_u(spec, x)) + field.hess_trace(x)
    target = x - field.tables[0].mean
    assert np.abs(lhs - target).max() <= 1e-10


def test_generator_identity_linear():
    a = SpdMatrix(np.array([[2.0, 0.4], [0.4, 1.0]]))
    field = solve_linear(a)
    gen = np.random.default_rng(6)
    x = gen.uniform(-3, 3, (40, 2))
    lhs = -field.grad_dot(x, x @ a.entries) + field.hess_trace(x)
    assert np.abs(lhs - x).max() <= 1e-12


def test_field_phi_and_derivative_shapes(lc_field):
    x = np.zeros((7, 1))
    v = np.ones((7, 1))
    assert lc_field.phi(x).shape == (7, 1)
    assert lc_field.grad_dot(x, v).shape == (7, 1)
    assert lc_field.hess_pair(x, v, v).shape == (7, 1)
    assert lc_field.third_triple(x, v, v, v).shape == (7, 1)
    assert lc_field.grad_columns(x).shape == (7, 1, 1)


def test_field_domain_guard(lc_field):
    with pytest.raises(ConfigError):
        lc_field.phi(np.array([[99.0]]))


def test_jacobi_flow_quadratic_matches_exponential():
    spec = quadratic_potential(np.array([1.0, 1.5, 2.0]))
    h, t_end = 1e-3, 1.0
    flow = jacobi_flow(spec, np.zeros(3), t_end, h, seed=3)
    target = spec.a.apply_spectral(lambda lam: np.exp(-lam * t_end)).entries
    rel = np.linalg.norm(flow["flows"][-1] - target) / np.linalg.norm(target)
    assert rel <= 5e-3


def test_jacobi_flow_band_logcosh():
    spec = logcosh_potential(1.0, 0.5, 2)
    h = 1e-3
    flow = jacobi_flow(spec, np.zeros(2), 5.0, h, seed=11)
    t = flow["times"]
    ops = np.sqrt(np.linalg.eigvalsh(
        np.einsum("kba,kbc->kac", flow["flows"], flow["flows"]))[:, -1])
    lower = np.exp(-spec.beta * t) * (1 - 10 * h * spec.beta)
    upper = np.exp(-spec.alpha * t) * (1 + 10 * h * spec.beta)
    assert np.all(ops >= lower) and np.all(ops <= upper)


def test_jacobi_flow_zero_horizon_is_identity():
    spec = logcosh_potential(1.0, 0.5, 2)
    flow = jacobi_flow(spec, np.zeros(2), 0.0, 1e-3, seed=0)
    assert np.array_equal(flow["flows"][0], np.eye(2))
    assert flow["flows"].shape == (1, 2, 2)


def test_jacobi_flow_step_cap():
    spec = logcosh_potential(1.0, 0.5, 1)  # beta = 1.5, cap = 1e-2
    with pytest.raises(ConfigError):
        jacobi_flow(spec, np.zeros(1), 1.0, 0.02, seed=0)


def test_trajectory_quadratic_deterministic():
    spec = quadratic_potential(np.array([1.0, 2.0]))
    h = 1e-3
    out = grad_phi_trajectory(spec, np.zeros(2), 20.0, paths=1, h=h, seed=9)
    target = np.diag([1.0, 0.5])
    assert np.all(out["stderr"] == 0.0)
    # integrator bias is O(h beta)
    assert np.abs(out["estimate"] - target).max() <= h * spec.beta


def test_trajectory_matches_quadrature(lc_table):
    spec = logcosh_potential(1.0, 0.5, 1)
    for x in (-2.0, 0.0, 1.0):
        out = grad_phi_trajectory(spec, np.array([x]), 15.0, paths=2048, h=1e-3, seed=77)
        diff = abs(out["estimate"][0, 0] - (-lc_table.phi1(x)))
        assert diff <= max(3 * out["stderr"][0, 0], 1e-4)


def test_trajectory_horizon_guard():
    spec = logcosh_potential(1.0, 0.5, 1)
    with pytest.raises(ConfigError, match="tail"):
        grad_phi_trajectory(spec, np.zeros(1), 2.0, paths=4, h=1e-3, seed=0)


def test_trajectory_field_sign_and_missing_derivatives():
    spec = quadratic_potential(np.array([1.0]))
    field = TrajectoryField(spec, horizon=20.0, paths=1, h=1e-3, seed=1)
    g = field.grad_matrix(np.zeros(1))
    assert g[0, 0] == pytest.approx(-1.0, abs=2e-3)  # -A^{-1} branch
    with pytest.raises(MissingDerivativeError):
        field.hess_pair(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    with pytest.raises(MissingDerivativeError):
        exact_sigma(field)


def test_estimate_sigma_linear_exact():
    a = SpdMatrix(np.diag([1.0, 2.0]))
    field = solve_linear(a)
    samples = np.random.default_rng(0).standard_normal((16, 2))
    out = estimate_sigma(field, samples)
    assert np.array_equal(out["sigma"].entries, np.diag([2.0, 0.5]))
    assert np.all(out["stderr"] == 0.0)


def test_estimate_sigma_matches_quadrature(lc_table, lc_field):
    gen = rng.stream(42, stream_id=7)
    samples = lc_table.sample_pi(20_000, gen)[:, None]
    out = estimate_sigma(lc_field, samples)
    target = lc_table.sigma_coord
    assert abs(out["sigma"].entries[0, 0] - target) <= 4 * out["stderr"][0, 0]


def test_sigma_eigenvalue_band(lc_field):
    w = exact_sigma(lc_field).eigenvalues
    alpha, beta = LC.alpha, LC.beta
    assert np.all(w >= 2 / beta**2 - 1e-6) and np.all(w <= 2 / alpha**2 + 1e-6)
    a = SpdMatrix(np.diag([1.0, 2.0]))
    w = exact_sigma(solve_linear(a)).eigenvalues
    assert np.all(w >= 2 / 4.0 - 1e-12) and np.all(w <= 2 / 1.0 + 1e-12)


def test_derivative_bounds_reported(lc_table):
    bounds = lc_table.derivative_bounds()
    assert set(bounds) == {"phi1", "phi2", "phi3"}
    # gradient bound is pinned by the band; higher orders are finite reports
    assert 1.0 / LC.beta <= bounds["phi1"] <= 1.0 / LC.alpha + 1e-8
    assert all(np.isfinite(v) and v > 0 for v in bounds.values())


def test_build_field_dispatch():
    assert isinstance(build_field(quadratic_potential(np.array([1.0, 2.0]))), LinearAnalyticField)
    f = build_field(logcosh_potential(1.0, 0.5, 3))
    assert isinstance(f, SeparableQuadratureField) and f.dim == 3
    # identical coordinates share one table
    assert f.tables[0] is f.tables[1]

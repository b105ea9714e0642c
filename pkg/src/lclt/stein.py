"""Stein-equation gradient fields and the limiting covariance.

For the diffusion generator A f = -<grad U, grad f> + Laplace f, the field
object exposes the coordinate solutions phi_i of A phi_i = h_i - pi(h_i),
h_i(x) = x_i, through batched oracles for phi, grad phi, and the second and
third derivative contractions the decomposition needs.

Sign convention: phi is the solution of A phi = h - pi(h) itself, which for
a quadratic potential gives the constant gradient -A^{-1} e_i.  All shipped
downstream quantities (Sigma, |D|, |delta|, Xi norms) are invariant under a
global sign flip of phi, so trajectory estimates that produce the positive
branch |grad phi| are compared in absolute value.

Three field kinds:
* linear-analytic  (quadratic potentials, everything closed form),
* separable-quadrature (per-coordinate spline tables solved by stable
  integrating-factor quadrature),
* trajectory Monte Carlo (the Jacobi-flow integral representation; first
  derivatives only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline

from . import rng
from .errors import ConfigError, DimensionMismatchError, MissingDerivativeError, NumericalFailureError
from .potentials import (
    KIND_QUADRATIC,
    PotentialSpec,
    ScalarPotential,
    grad_u,
    hessian_diag,
    scalar_components,
)
from .spd import SpdMatrix, inv_spd

TABLE_FORMAT_VERSION = 1
DEFAULT_KNOTS = 16385  # knot spacing drives identity-test accuracy; see tests


def default_domain_halfwidth(alpha: float) -> float:
    return max(10.0, 8.0 / math.sqrt(alpha))


# ---------------------------------------------------------------------------
# scalar (one-coordinate) Stein table


@dataclass
class ScalarSteinTable:
    """Spline table for one coordinate of a separable Stein solution.

    phi1 is the quadrature solution of the first-order ODE
    d phi1/dt = u'(t) phi1 + (t - m); phi2 and phi3 are evaluated through the
    ODE identities phi2 = u' phi1 + (t - m), phi3 = u'' phi1 + u' phi2 + 1,
    so the Stein substitution -u' phi1 + phi2 = t - m is exact by
    construction and the residual reported below measures quadrature error
    of phi1 against its own derivative.
    """

    scalar: ScalarPotential
    halfwidth: float
    mean: float
    knots: np.ndarray
    phi1_values: np.ndarray
    sigma_coord: float
    ode_residual: float
    cdf_knots: np.ndarray
    cdf_values: np.ndarray

    def __post_init__(self):
        self._s1 = CubicSpline(self.knots, self.phi1_values)
        anti = self._s1.antiderivative()
        self._phi0 = anti
        self._phi0_shift = float(anti(0.0))

    def _check_domain(self, t: np.ndarray) -> None:
        lim = self.halfwidth
        if np.any(np.abs(t) > lim):
            raise ConfigError(
                f"argument outside the Stein table domain [-{lim}, {lim}]; rebuild with larger L"
            )

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        self._check_domain(t)
        return self._phi0(t) - self._phi0_shift

    def phi1(self, t):
        t = np.asarray(t, dtype=float)
        self._check_domain(t)
        return self._s1(t)

    def phi2(self, t):
        t = np.asarray(t, dtype=float)
        return self.scalar.du(t) * self.phi1(t) + (t - self.mean)

    def phi3(self, t):
        t = np.asarray(t, dtype=float)
        return self.scalar.d2u(t) * self.phi1(t) + self.scalar.du(t) * self.phi2(t) + 1.0

    def sample_pi(self, count: int, gen: np.random.Generator) -> np.ndarray:
        """Draw from the coordinate stationary law by inverse CDF on the grid."""
        u = gen.uniform(size=count)
        return np.interp(u, self.cdf_values, self.cdf_knots)

    def derivative_bounds(self) -> dict:
        """Sup norms of phi', phi'', phi''' over the table domain (reported,
        not compared to any constant)."""
        return {
            "phi1": float(np.abs(self.phi1(self.knots)).max()),
            "phi2": float(np.abs(self.phi2(self.knots)).max()),
            "phi3": float(np.abs(self.phi3(self.knots)).max()),
        }

    def save(self, path) -> None:
        np.savez(
            path,
            format_version=TABLE_FORMAT_VERSION,
            scalar_a=self.scalar.a,
            scalar_eps=self.scalar.eps,
            halfwidth=self.halfwidth,
            mean=self.mean,
            knots=self.knots,
            phi1_values=self.phi1_values,
            sigma_coord=self.sigma_coord,
            ode_residual=self.ode_residual,
            cdf_knots=self.cdf_knots,
            cdf_values=self.cdf_values,
        )

    @classmethod
    def load(cls, path) -> "ScalarSteinTable":
        data = np.load(path)
        version = int(data["format_version"])
        if version != TABLE_FORMAT_VERSION:
            raise ConfigError(f"unsupported Stein table version {version}")
        return cls(
            scalar=ScalarPotential(a=float(data["scalar_a"]), eps=float(data["scalar_eps"])),
            halfwidth=float(data["halfwidth"]),
            mean=float(data["mean"]),
            knots=data["knots"],
            phi1_values=data["phi1_values"],
            sigma_coord=float(data["sigma_coord"]),
            ode_residual=float(data["ode_residual"]),
            cdf_knots=data["cdf_knots"],
            cdf_values=data["cdf_values"],
        )


def solve_separable_1d(scalar: ScalarPotential, tol: float = 1e-10,
                       halfwidth: float | None = None,
                       n_knots: int = DEFAULT_KNOTS) -> ScalarSteinTable:
    """Solve the 1-d Stein equation by stable integrating-factor quadrature.

    phi1(x) = e^{u(x)} int_{-inf}^x (y - m) e^{-u(y)} dy, evaluated from the
    left of the mean and from the right tail above it so the exponential
    factor never amplifies cancellation.  The integration grid extends past
    the table domain so that truncated tails are negligible.
    """
    if halfwidth is None:
        halfwidth = default_domain_halfwidth(scalar.alpha)
    L = float(halfwidth)
    pad = max(3.0, 0.5 * L)
    refine = 4  # integration grid denser than the knot table
    fine_step = 2.0 * L / (refine * (n_knots - 1))
    n_pad = refine * int(math.ceil(pad / (refine * fine_step)))
    n_fine = refine * (n_knots - 1) + 1 + 2 * n_pad
    grid = np.linspace(-L - n_pad * fine_step, L + n_pad * fine_step, n_fine)

    u_vals = scalar.u(grid)
    weight = np.exp(-(u_vals - u_vals.min()))
    z = simpson(weight, x=grid)
    mean = simpson(grid * weight, x=grid) / z

    # tail-mass precondition for the table domain [-L, L]
    inside = np.abs(grid) <= L
    tail_mass = 1.0 - simpson(weight[inside], x=grid[inside]) / z
    if tail_mass > 1e-12:
        raise ConfigError(f"halfwidth L={L} too small: tail mass {tail_mass:.3e} > 1e-12")

    integrand = (grid - mean) * weight
    # two independent cumulatives: integrating toward x from the near tail on
    # each side of the mean keeps the e^{u(x)} factor from amplifying
    # cancellation (the total integral is ~0, so left[-1] - left would lose
    # all precision in the right tail)
    left = np.concatenate([[0.0], cumulative_simpson(integrand, x=grid)])
    tail_cum = np.concatenate([[0.0], cumulative_simpson(integrand[::-1], x=-grid[::-1])])
    right = tail_cum[::-1]
    # log-space product avoids overflow of e^{u} against the decaying integral
    shifted_u = u_vals - u_vals.min()
    with np.errstate(divide="ignore"):
        phi1 = np.where(
            grid <= mean,
            np.sign(left) * np.exp(shifted_u + np.log(np.abs(left), where=left != 0.0,
                                                      out=np.full_like(left, -np.inf))),
            -np.sign(right) * np.exp(shifted_u + np.log(np.abs(right), where=right != 0.0,
                                                        out=np.full_like(right, -np.inf))),
        )

    knot_idx = n_pad + refine * np.arange(n_knots)
    knots = grid[knot_idx]
    phi1_knots = phi1[knot_idx]

    # the gradient band -phi1 in [1/beta, 1/alpha] is a theorem for admissible
    # scalar potentials; violations expose quadrature contamination that the
    # ODE residual cannot see (c e^{u} solves the homogeneous equation)
    neg = -phi1_knots
    band_tol = 1e-4 / scalar.alpha
    if neg.min() < 1.0 / scalar.beta - band_tol or neg.max() > 1.0 / scalar.alpha + band_tol:
        raise NumericalFailureError(
            f"Stein quadrature violated the gradient band [{1.0 / scalar.beta:.6g}, "
            f"{1.0 / scalar.alpha:.6g}]: range [{neg.min():.6g}, {neg.max():.6g}]"
        )

    # residual of the first-order ODE against the spline's own derivative
    s1 = CubicSpline(knots, phi1_knots)
    check = np.linspace(-0.8 * L, 0.8 * L, 4097)
    resid = s1.derivative()(check) - (scalar.du(check) * s1(check) + (check - mean))
    ode_residual = float(np.abs(resid).max())
    if ode_residual > max(1e-6, tol * 1e4):
        raise NumericalFailureError(f"Stein quadrature did not converge: ODE residual {ode_residual:.3e}")

    sigma_coord = 2.0 * simpson(phi1 * phi1 * weight, x=grid) / z

    cdf = np.concatenate([[0.0], cumulative_simpson(weight, x=grid)]) / z
    cdf = np.clip(cdf, 0.0, 1.0)

    return ScalarSteinTable(
        scalar=scalar,
        halfwidth=L,
        mean=mean,
        knots=knots,
        phi1_values=phi1_knots,
        sigma_coord=float(sigma_coord),
        ode_residual=ode_residual,
        cdf_knots=grid,
        cdf_values=cdf,
    )


# ---------------------------------------------------------------------------
# gradient field kinds


class SteinGradientField:
    """Common batched interface; X, V arguments are (m, d) arrays."""

    kind = "abstract"
    dim: int
    has_higher_derivatives = False

    def phi(self, x):
        raise NotImplementedError

    def grad_dot(self, x, v):
        """(<grad phi_i(x_k), v_k>)_i as an (m, d) array."""
        raise NotImplementedError

    def grad_matrix(self, x) -> np.ndarray:
        """(d, d) matrix with column i = grad phi_i(x) at a single point."""
        raise NotImplementedError

    def grad_columns(self, x) -> np.ndarray:
        """(m, d, d) stack of grad_matrix over a batch."""
        raise NotImplementedError

    def hess_pair(self, x, v, w):
        raise MissingDerivativeError(f"{self.kind} field does not provide second derivatives")

    def hess_trace(self, x):
        raise MissingDerivativeError(f"{self.kind} field does not provide second derivatives")

    def third_triple(self, x, v1, v2, v3):
        raise MissingDerivativeError(f"{self.kind} field does not provide third derivatives")

    def _batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.dim:
            raise DimensionMismatchError(f"expected trailing dim {self.dim}, got {x.shape}")
        return x


class LinearAnalyticField(SteinGradientField):
    """Constant-gradient solution for quadratic potentials: grad phi = -A^{-1}."""

    kind = "linear_analytic"
    has_higher_derivatives = True

    def __init__(self, a: SpdMatrix):
        self.a = a
        self.dim = a.dim
        self.g = -inv_spd(a).entries  # symmetric, columns are grad phi_i

    def phi(self, x):
        return self._batch(x) @ self.g

    def grad_dot(self, x, v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        return v @ self.g

    def grad_matrix(self, x):
        return self.g

    def grad_columns(self, x):
        x = self._batch(x)
        return np.broadcast_to(self.g, (x.shape[0], self.dim, self.dim))

    def hess_pair(self, x, v, w):
        return np.zeros_like(self._batch(x))

    def hess_trace(self, x):
        return np.zeros_like(self._batch(x))

    def third_triple(self, x, v1, v2, v3):
        return np.zeros_like(self._batch(x))


class SeparableQuadratureField(SteinGradientField):
    """Per-coordinate spline tables for a separable potential."""

    kind = "separable_quadrature"
    has_higher_derivatives = True

    def __init__(self, tables: list[ScalarSteinTable]):
        if not tables:
            raise ConfigError("need at least one coordinate table")
        self.tables = tables
        self.dim = len(tables)

    def _per_coord(self, x, fn_name):
        x = self._batch(x)
        out = np.empty_like(x)
        for i, table in enumerate(self.tables):
            out[:, i] = getattr(table, fn_name)(x[:, i])
        return out

    def phi(self, x):
        return self._per_coord(x, "phi")

    def grad_dot(self, x, v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        return self._per_coord(x, "phi1") * v

    def grad_matrix(self, x):
        x = np.asarray(x, dtype=float)
        return np.diag(self._per_coord(x[None, :], "phi1")[0])

    def grad_columns(self, x):
        x = self._batch(x)
        vals = self._per_coord(x, "phi1")
        out = np.zeros((x.shape[0], self.dim, self.dim))
        idx = np.arange(self.dim)
        out[:, idx, idx] = vals
        return out

    def hess_pair(self, x, v, w):
        return self._per_coord(x, "phi2") * np.asarray(v) * np.asarray(w)

    def hess_trace(self, x):
        return self._per_coord(x, "phi2")

    def third_triple(self, x, v1, v2, v3):
        return self._per_coord(x, "phi3") * np.asarray(v1) * np.asarray(v2) * np.asarray(v3)


class TrajectoryField(SteinGradientField):
    """Jacobi-flow Monte Carlo estimates of |grad phi|; first derivatives only.

    Second and third derivatives would require higher-order variation flows
    and are deliberately not provided.
    """

    kind = "trajectory_mc"
    has_higher_derivatives = False

    def __init__(self, spec: PotentialSpec, horizon: float | None = None,
                 paths: int = 1024, h: float | None = None, seed: int = 0):
        self.spec = spec
        self.dim = spec.dim
        self.horizon = horizon if horizon is not None else 20.0 / spec.alpha
        self.h = h if h is not None else 1.0 / (50.0 * spec.beta)
        self.paths = paths
        self.seed = seed

    def grad_matrix(self, x):
        est = grad_phi_trajectory(self.spec, x, self.horizon, self.paths, self.h, self.seed)
        return -est["estimate"]  # module sign convention

    def grad_columns(self, x):
        x = self._batch(x)
        return np.stack([self.grad_matrix(xi) for xi in x])

    def grad_dot(self, x, v):
        x = self._batch(x)
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        return np.stack([self.grad_matrix(xi).T @ vi for xi, vi in zip(x, v)])

    def phi(self, x):
        raise MissingDerivativeError("trajectory field does not provide phi values")


def solve_linear(a: SpdMatrix) -> LinearAnalyticField:
    """Analytic field for grad U(x) = A x."""
    return LinearAnalyticField(a)


def build_field(spec: PotentialSpec, n_knots: int = DEFAULT_KNOTS) -> SteinGradientField:
    """Exact field for a shipped potential: analytic if quadratic, else quadrature."""
    if spec.kind == KIND_QUADRATIC:
        return solve_linear(spec.a)
    components = scalar_components(spec)
    cache: dict[tuple, ScalarSteinTable] = {}
    tables = []
    for comp in components:
        key = (comp.a, comp.eps)
        if key not in cache:
            cache[key] = solve_separable_1d(comp, n_knots=n_knots)
        tables.append(cache[key])
    return SeparableQuadratureField(tables)


def exact_sigma(field: SteinGradientField) -> SpdMatrix:
    """Limiting covariance Sigma = (pi(2 grad phi_i . grad phi_j))_{ij} for exact fields."""
    if isinstance(field, LinearAnalyticField):
        return field.a.apply_spectral(lambda lam: 2.0 / (lam * lam))
    if isinstance(field, SeparableQuadratureField):
        return SpdMatrix(np.diag([t.sigma_coord for t in field.tables]))
    raise MissingDerivativeError("exact Sigma is unavailable for trajectory fields")


def estimate_sigma(field: SteinGradientField, samples) -> dict:
    """Sample estimate of Sigma: mean of 2 grad phi(x)^T grad phi(x), with stderr."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ConfigError("need at least two samples of shape (m, d)")
    grams = 2.0 * np.einsum("kai,kaj->kij", field.grad_columns(samples), field.grad_columns(samples))
    mean = grams.mean(axis=0)
    stderr = grams.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    return {"sigma": SpdMatrix(0.5 * (mean + mean.T)), "stderr": stderr}


# ---------------------------------------------------------------------------
# Jacobi flow


def _validate_flow_step(spec: PotentialSpec, h: float) -> None:
    cap = min(1e-2, 1.0 / (10.0 * spec.beta))
    if not (0.0 < h <= cap):
        raise ConfigError(f"flow step h={h} must lie in (0, {cap:.4g}]")


def jacobi_flow(spec: PotentialSpec, x0, horizon: float, h: float, seed: int) -> dict:
    """Integrate one diffusion path jointly with its first-variation flow.

    Euler-Maruyama for dX = -grad U dt + sqrt(2) dB and the matrix ODE
    d(grad X) = -hess U(X) grad X dt on the same grid, grad X(0) = I.
    """
    _validate_flow_step(spec, h)
    x = np.array(x0, dtype=float)
    if x.shape != (spec.dim,):
        raise DimensionMismatchError(f"x0 shape {x.shape} != ({spec.dim},)")
    steps = int(round(horizon / h))
    gen = rng.stream(seed, stream_id=rng.STREAM_FLOW)
    times = np.arange(steps + 1) * h
    states = np.empty((steps + 1, spec.dim))
    flows = np.empty((steps + 1, spec.dim, spec.dim))
    states[0] = x
    j = np.eye(spec.dim)
    flows[0] = j
    scale = math.sqrt(2.0 * h)
    separable = spec.is_separable()
    noise = gen.standard_normal((steps, spec.dim)) if steps else np.empty((0, spec.dim))
    for k in range(steps):
        if separable:
            j = j - h * hessian_diag(spec, x)[:, None] * j
        else:
            j = j - h * spec.a.entries @ j
        x = x - h * grad_u(spec, x) + scale * noise[k]
        states[k + 1] = x
        flows[k + 1] = j
    return {"times": times, "states": states, "flows": flows}


def grad_phi_trajectory(spec: PotentialSpec, x, horizon: float, paths: int,
                        h: float, seed: int) -> dict:
    """Monte Carlo estimate of int_0^T E (grad X_t)^T dt at the point x.

    Returns the positive-branch magnitude estimate (the module's phi equals
    minus this integral), its entrywise stderr across paths, and the
    truncation tail bound e^{-alpha T}/alpha.
    """
    tail = math.exp(-spec.alpha * horizon) / spec.alpha
    if horizon < 10.0 / spec.alpha:
        raise ConfigError(
            f"horizon T={horizon} too short: need T >= {10.0 / spec.alpha:.3g} "
            f"(truncation tail bound {tail:.3e})"
        )
    _validate_flow_step(spec, h)
    if paths < 1:
        raise ConfigError("paths must be >= 1")
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise DimensionMismatchError(f"x shape {x.shape} != ({spec.dim},)")
    steps = int(round(horizon / h))
    gen = rng.stream(seed, stream_id=rng.STREAM_FLOW)
    d = spec.dim
    xs = np.broadcast_to(x, (paths, d)).copy()
    flows = np.broadcast_to(np.eye(d), (paths, d, d)).copy()
    integral = np.zeros((paths, d, d))
    scale = math.sqrt(2.0 * h)
    separable = spec.is_separable()
    for _ in range(steps):
        prev = flows
        if separable:
            flows = prev - h * hessian_diag(spec, xs)[:, :, None] * prev
        else:
            flows = prev - h * np.einsum("ab,pbc->pac", spec.a.entries, prev)
        integral += 0.5 * h * (prev + flows)
        xs = xs - h * grad_u(spec, xs) + scale * gen.standard_normal((paths, d))
    per_path = np.swapaxes(integral, 1, 2)  # (grad X)^T integrals
    estimate = per_path.mean(axis=0)
    if paths > 1:
        stderr = per_path.std(axis=0, ddof=1) / math.sqrt(paths)
    else:
        stderr = np.zeros_like(estimate)
    return {"estimate": estimate, "stderr": stderr, "tail_bound": tail}

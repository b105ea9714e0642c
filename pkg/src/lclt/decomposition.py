"""Martingale/remainder decomposition of the scaled ergodic average.

W_n = sqrt(eta/n) (sum_{k<n} X_k - n pi_mean) splits as W_n = H_n + R_n where

    H_{n,i} = -sqrt(2/n) sum_k <grad phi_i(X_k), xi_{k+1}>

and R_n = -sum_{j=1}^6 R_{n,j} collects the boundary term, the quadratic
noise fluctuation, the drift-noise cross terms, and three third-order Taylor
remainders.  With exact derivative oracles the identity holds to floating
point + quadrature accuracy and is this module's central checked property.

Term conventions (validated against the telescoped Taylor expansion of
phi_i(X_{k+1}) - phi_i(X_k)):
* the boundary term uses phi_i(X_n), the index the telescoping sum requires;
* the mixed third-order family R_6 carries the multinomial factor 3 and the
  inner weight sqrt(eta/2) that the expansion of (dX)^{x3} produces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainConfig, ChainRun, START_GAUSSIAN_EXACT, START_WARMUP, simulate
from .errors import ConfigError, MissingDerivativeError
from .potentials import KIND_QUADRATIC, PotentialSpec, grad_u
from .stein import SteinGradientField, exact_sigma
from .spd import inv_sqrt_spd

GL_NODES = 16  # Gauss-Legendre nodes on [0, 1] for the t-integrals

_gl_x, _gl_w = np.polynomial.legendre.leggauss(GL_NODES)
GL_T = 0.5 * (_gl_x + 1.0)
GL_W = 0.5 * _gl_w


@dataclass(frozen=True)
class DecompositionResult:
    w_n: np.ndarray
    h_n: np.ndarray
    r_terms: np.ndarray      # (6, d)
    r_total: np.ndarray      # = -sum_j r_terms[j]
    residual: np.ndarray     # w_n - h_n - r_total
    pi_mean: np.ndarray


def compute_w_n(run: ChainRun, pi_mean) -> np.ndarray:
    """sqrt(eta/n) ( sum_{k=0}^{n-1} X_k - n pi_mean )."""
    pi_mean = np.asarray(pi_mean, dtype=float)
    n = run.n
    total = run.states[:n].sum(axis=0) - n * pi_mean
    return math.sqrt(run.eta / n) * total


def compute_h_n(run: ChainRun, field: SteinGradientField) -> np.ndarray:
    """Martingale part -sqrt(2/n) sum_k <grad phi_i(X_k), xi_{k+1}>."""
    x = run.states[: run.n]
    dots = field.grad_dot(x, run.innovations)
    return -math.sqrt(2.0 / run.n) * dots.sum(axis=0)


def compute_r_terms(run: ChainRun, field: SteinGradientField) -> np.ndarray:
    """The six remainder families, each an R^d vector (stacked over i)."""
    if not field.has_higher_derivatives:
        raise MissingDerivativeError(
            "remainder terms need second and third derivatives; use an exact field kind"
        )
    n, eta = run.n, run.eta
    d = run.config.d
    x = run.states[:n]
    xi = run.innovations
    g = grad_u(run.spec, x)
    dx = -eta * g + math.sqrt(2.0 * eta) * xi
    sqrt_n = math.sqrt(n)

    r1 = (field.phi(run.states[0]) - field.phi(run.states[n]))[0] / math.sqrt(n * eta)

    r2 = math.sqrt(eta / n) * (field.hess_pair(x, xi, xi) - field.hess_trace(x)).sum(axis=0)

    r3 = (eta / math.sqrt(2.0 * n)) * (
        field.hess_pair(x, -g, xi) + field.hess_pair(x, xi, -g)
    ).sum(axis=0)

    # Gauss-Legendre in t for the three third-order families
    q_xi3 = np.zeros(d)
    q_g3 = np.zeros(d)
    q_gxx = np.zeros(d)
    q_ggx = np.zeros(d)
    for t, w in zip(GL_T, GL_W):
        pts = x + t * dx
        wt = w * (1.0 - t) ** 2
        q_xi3 += wt * field.third_triple(pts, xi, xi, xi).sum(axis=0)
        q_g3 += wt * field.third_triple(pts, g, g, g).sum(axis=0)
        q_gxx += wt * field.third_triple(pts, g, xi, xi).sum(axis=0)
        q_ggx += wt * field.third_triple(pts, g, g, xi).sum(axis=0)

    r4 = (math.sqrt(2.0) * eta / sqrt_n) * q_xi3

    r5 = (eta**1.5 / (2.0 * sqrt_n)) * field.hess_pair(x, g, g).sum(axis=0) \
        - (eta**2.5 / (2.0 * sqrt_n)) * q_g3

    r6 = -(3.0 * eta**1.5 / sqrt_n) * (q_gxx - math.sqrt(eta / 2.0) * q_ggx)

    return np.stack([r1, r2, r3, r4, r5, r6])


def decompose(run: ChainRun, field: SteinGradientField, pi_mean=None) -> DecompositionResult:
    """Full decomposition with the identity residual w - h - r_total."""
    if pi_mean is None:
        pi_mean = np.zeros(run.config.d)
    pi_mean = np.asarray(pi_mean, dtype=float)
    w = compute_w_n(run, pi_mean)
    h = compute_h_n(run, field)
    r = compute_r_terms(run, field)
    r_total = -r.sum(axis=0)
    return DecompositionResult(
        w_n=w, h_n=h, r_terms=r, r_total=r_total,
        residual=w - h - r_total, pi_mean=pi_mean,
    )


def remainder_norm_scan(spec: PotentialSpec, field: SteinGradientField, grid,
                        replicas: int, seed: int) -> list[dict]:
    """Monte Carlo E|Sigma^{-1/2} R_n| with stderr over a grid of (n, eta).

    Starts are gaussian_exact for quadratic potentials and warmup otherwise
    (the stationary-start requirement has no exact sampler off the linear
    case).
    """
    if replicas < 2:
        raise ConfigError("replicas must be >= 2")
    sigma_is = inv_sqrt_spd(exact_sigma(field)).entries
    start = START_GAUSSIAN_EXACT if spec.kind == KIND_QUADRATIC else START_WARMUP
    rows = []
    for point_id, (n, eta) in enumerate(grid):
        vals = np.empty(replicas)
        for r in range(replicas):
            run_seed = int(np.uint64(seed) ^ np.uint64(r) ^ np.uint64(point_id) << np.uint64(32))
            config = ChainConfig(eta=eta, n=n, d=spec.dim, seed=run_seed, start=start)
            run = simulate(spec, config)
            res = decompose(run, field)
            vals[r] = np.linalg.norm(sigma_is @ res.r_total)
        rows.append({
            "n": n,
            "eta": eta,
            "mean_abs": float(vals.mean()),
            "stderr": float(vals.std(ddof=1) / math.sqrt(replicas)),
        })
    return rows

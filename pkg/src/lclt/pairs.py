"""Exchangeable-pair construction and the Stein-bound component estimators.

A pair draw picks a uniform index I in [1, n], replaces xi_I by a fresh
standard normal, and re-runs the recurrence from I.  With

    t_I  = -sqrt(2/n) (<grad phi_i(X_{I-1}), xi_I>)_i,
    r_I  =  sqrt(2/n) sum_{j>=I} (<grad phi_i(X_j^{(I)}) - grad phi_i(X_j), xi_{j+1}>)_i,

the statistics are D = Sigma^{-1/2}(u'_I - t_I) (u'_I is t_I with the fresh
innovation) and delta = W' - W = Sigma^{-1/2}(u'_I - t_I - r_I).

E[D | X] is computed analytically: the fresh-innovation average is zero, so
the index average is an exact finite sum and the linearity check
E[D | X] = lambda W is a floating-point identity rather than a statistical
test.  Under this package's sign convention lambda = -1/n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .chain import ChainRun, replay_with_replacement
from .decomposition import compute_h_n
from .errors import ConfigError
from .potentials import grad_u
from .stein import SteinGradientField


@dataclass(frozen=True)
class PairSample:
    """One exchangeable-pair draw on a base run."""

    run: ChainRun
    index_i: int                 # 1-based replaced index
    xi_replacement: np.ndarray
    w: np.ndarray
    w_prime: np.ndarray
    d_vec: np.ndarray
    delta: np.ndarray
    t_i: np.ndarray
    r_i: np.ndarray
    perturbed_states: np.ndarray  # X_j^{(I)} for j >= I


@dataclass(frozen=True)
class PairBatch:
    """Vectorized pair draws sharing one base run (states not materialized)."""

    run: ChainRun
    index_i: np.ndarray      # (count,)
    d_vec: np.ndarray        # (count, d)
    delta: np.ndarray        # (count, d)
    t_i: np.ndarray          # (count, d)
    r_i: np.ndarray          # (count, d)

    @property
    def count(self) -> int:
        return self.index_i.shape[0]


def _scaled_dot(field: SteinGradientField, x, v, n: int) -> np.ndarray:
    return -math.sqrt(2.0 / n) * field.grad_dot(x, v)


def base_w(run: ChainRun, field: SteinGradientField, sigma_inv_sqrt) -> np.ndarray:
    """W = Sigma^{-1/2} H_n of the base run."""
    return sigma_inv_sqrt @ compute_h_n(run, field)


def draw_pair(run: ChainRun, field: SteinGradientField, sigma_inv_sqrt,
              seed: int) -> PairSample:
    """One pair draw with full perturbed-state recomputation."""
    n, d = run.n, run.config.d
    gen = rng.stream(seed, stream_id=rng.STREAM_PAIR)
    index_i = int(gen.integers(1, n + 1))
    xi_new = gen.standard_normal(d)
    return materialize_pair(run, field, sigma_inv_sqrt, index_i, xi_new)


def materialize_pair(run: ChainRun, field: SteinGradientField, sigma_inv_sqrt,
                     index_i: int, xi_new) -> PairSample:
    """Assemble the pair statistics for an explicit (index, innovation)."""
    n = run.n
    xi_new = np.asarray(xi_new, dtype=float)
    perturbed = replay_with_replacement(run, index_i, xi_new)
    x_prev = run.states[index_i - 1]
    t_i = _scaled_dot(field, x_prev[None], run.innovations[index_i - 1][None], n)[0]
    u_prime = _scaled_dot(field, x_prev[None], xi_new[None], n)[0]
    if index_i <= n - 1:
        diffs = field.grad_dot(perturbed.states[index_i : n], run.innovations[index_i:]) \
            - field.grad_dot(run.states[index_i : n], run.innovations[index_i:])
        r_i = math.sqrt(2.0 / n) * diffs.sum(axis=0)
    else:
        r_i = np.zeros_like(t_i)
    w = base_w(run, field, sigma_inv_sqrt)
    w_prime = sigma_inv_sqrt @ compute_h_n(perturbed, field)
    return PairSample(
        run=run, index_i=index_i, xi_replacement=xi_new,
        w=w, w_prime=w_prime, d_vec=sigma_inv_sqrt @ (u_prime - t_i),
        delta=w_prime - w, t_i=t_i, r_i=r_i,
        perturbed_states=perturbed.states[index_i:],
    )


def draw_pair_batch(run: ChainRun, field: SteinGradientField, sigma_inv_sqrt,
                    count: int, seed: int) -> PairBatch:
    """Vectorized pair draws; perturbed chains are streamed, not stored.

    delta is assembled from its two-term form (replacement term minus
    Sigma^{-1/2} r_I), which draw_pair's full recomputation validates.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    n, d = run.n, run.config.d
    eta = run.eta
    spec = run.spec
    gen = rng.stream(seed, stream_id=rng.STREAM_PAIR)
    idx = gen.integers(1, n + 1, size=count)
    xi_new = gen.standard_normal((count, d))

    order = np.argsort(idx, kind="stable")
    idx_sorted = idx[order]
    xi_sorted = xi_new[order]

    scale = math.sqrt(2.0 * eta)
    states = run.states
    innov = run.innovations
    p = np.empty((count, d))
    r_acc = np.zeros((count, d))
    # base dots <grad phi(X_j), xi_{j+1}> for j = 1..n-1
    base_dots = field.grad_dot(states[1:n], innov[1:n]) if n > 1 else np.empty((0, d))

    activated = 0
    for j in range(1, n):
        hi = np.searchsorted(idx_sorted, j, side="right")
        if hi > activated:
            new = slice(activated, hi)
            x_prev = states[j - 1]
            p[new] = x_prev - eta * grad_u(spec, x_prev) + scale * xi_sorted[new]
            activated = hi
        if activated == 0:
            continue
        act = slice(0, activated)
        xi_next = innov[j]
        dots = field.grad_dot(p[act], np.broadcast_to(xi_next, (activated, d)))
        r_acc[act] += dots - base_dots[j - 1]
        p[act] = p[act] - eta * grad_u(spec, p[act]) + scale * xi_next

    r_sorted = math.sqrt(2.0 / n) * r_acc
    x_prev_rows = states[idx_sorted - 1]
    t_sorted = _scaled_dot(field, x_prev_rows, innov[idx_sorted - 1], n)
    u_sorted = _scaled_dot(field, x_prev_rows, xi_sorted, n)

    s = np.asarray(sigma_inv_sqrt, dtype=float)
    d_sorted = (u_sorted - t_sorted) @ s.T
    delta_sorted = (u_sorted - t_sorted - r_sorted) @ s.T

    inv = np.empty_like(order)
    inv[order] = np.arange(count)
    return PairBatch(
        run=run, index_i=idx,
        d_vec=d_sorted[inv], delta=delta_sorted[inv],
        t_i=t_sorted[inv], r_i=r_sorted[inv],
    )


def conditional_mean_check(run: ChainRun, field: SteinGradientField,
                           sigma_inv_sqrt) -> dict:
    """Exact linearity check E[D | X] = lambda W.

    The (I, xi') average of D is a finite sum: the fresh innovation
    integrates to zero, leaving (sqrt 2 / (n sqrt n)) Sigma^{-1/2}
    sum_I (<grad phi_i(X_{I-1}), xi_I>)_i.  Returns the least-squares lambda
    and the residual norm ||E[D|X] - lambda W||.
    """
    n = run.n
    dots = field.grad_dot(run.states[:n], run.innovations).sum(axis=0)
    e_d_given_x = math.sqrt(2.0) / (n * math.sqrt(n)) * (sigma_inv_sqrt @ dots)
    w = base_w(run, field, sigma_inv_sqrt)
    w_norm_sq = float(w @ w)
    if w_norm_sq == 0.0:
        return {
            "lambda_hat": math.nan,
            "residual_norm": float(np.linalg.norm(e_d_given_x)),
            "w_norm": 0.0,
            "degenerate": True,
        }
    lam = float((e_d_given_x @ w) / w_norm_sq)
    residual = float(np.linalg.norm(e_d_given_x - lam * w))
    return {
        "lambda_hat": lam,
        "residual_norm": residual,
        "w_norm": math.sqrt(w_norm_sq),
        "degenerate": False,
    }


def _group_samples(samples) -> list[tuple[ChainRun, np.ndarray, np.ndarray, np.ndarray]]:
    """Group pair draws by base run -> (run, idx, t_i, r_i) arrays."""
    if isinstance(samples, (PairSample, PairBatch)):
        samples = [samples]
    groups: dict[int, list] = {}
    runs: dict[int, ChainRun] = {}
    for s in samples:
        key = id(s.run)
        runs[key] = s.run
        if isinstance(s, PairBatch):
            groups.setdefault(key, []).append((s.index_i, s.t_i, s.r_i))
        else:
            groups.setdefault(key, []).append(
                (np.array([s.index_i]), s.t_i[None], s.r_i[None])
            )
    out = []
    for key, parts in groups.items():
        idx = np.concatenate([p[0] for p in parts])
        t = np.vstack([p[1] for p in parts])
        r = np.vstack([p[2] for p in parts])
        out.append((runs[key], idx, t, r))
    return out


def xi_components(samples, field: SteinGradientField, sigma, sigma_inv_sqrt) -> dict:
    """Monte Carlo estimates of the Xi decomposition components.

    Per base run, sum_I T_I and sum_I t_I t_I^T are computed exactly over all
    indices; the cross term sum_I t_I r_I^T is estimated from that run's
    draws as n * mean(t_I r_I^T).  Reported quantities follow the paper's
    scalings: R1/R2/R3 carry sqrt(d)/2, xi_hs carries sqrt(d); means and
    stderrs are across base runs.
    """
    groups = _group_samples(samples)
    total_draws = sum(len(g[1]) for g in groups)
    if total_draws < 2:
        raise ConfigError("need at least two pair draws")
    sig = np.asarray(sigma, dtype=float)
    s = np.asarray(sigma_inv_sqrt, dtype=float)
    d = sig.shape[0]
    sq_d = math.sqrt(d)
    per_run = {"R1": [], "R2": [], "R3": [], "xi_hs": []}
    for run, idx, t_all, r_all in groups:
        n = run.n
        cols = field.grad_columns(run.states[:n])
        t_sum = 2.0 / n * np.einsum("kai,kaj->ij", cols, cols)
        t_rows = _scaled_dot(field, run.states[:n], run.innovations, n)
        tt_sum = t_rows.T @ t_rows
        rt_est = n * np.einsum("ki,kj->ij", t_all, r_all) / len(idx)
        xi_mat = 0.5 * s @ ((t_sum - sig) + (tt_sum - sig) + rt_est) @ s
        per_run["R1"].append(0.5 * sq_d * np.linalg.norm(t_sum - sig))
        per_run["R2"].append(0.5 * sq_d * np.linalg.norm(tt_sum - sig))
        per_run["R3"].append(0.5 * sq_d * np.linalg.norm(rt_est))
        per_run["xi_hs"].append(sq_d * np.linalg.norm(xi_mat))
    out = {}
    n_runs = len(groups)
    for key, vals in per_run.items():
        arr = np.asarray(vals)
        out[f"{key}_hat" if key.startswith("R") else f"{key}_mean"] = float(arr.mean())
        stderr = float(arr.std(ddof=1) / math.sqrt(n_runs)) if n_runs > 1 else 0.0
        out[f"{key}_stderr"] = stderr
    return out


def d_delta_moments(batch) -> dict:
    """E|D||delta|^2 and E|D||delta|^2 (|log|delta|| v 1) with stderrs."""
    if isinstance(batch, PairBatch):
        d_vec, delta = batch.d_vec, batch.delta
    else:
        d_vec = np.vstack([s.d_vec for s in batch])
        delta = np.vstack([s.delta for s in batch])
    if d_vec.shape[0] < 2:
        raise ConfigError("need at least two pair draws")
    abs_d = np.linalg.norm(d_vec, axis=1)
    abs_delta = np.linalg.norm(delta, axis=1)
    m2_samples = abs_d * abs_delta**2
    with np.errstate(divide="ignore"):
        log_factor = np.where(abs_delta > 0.0, np.abs(np.log(abs_delta, where=abs_delta > 0.0,
                                                             out=np.zeros_like(abs_delta))), 0.0)
    log_factor = np.maximum(log_factor, 1.0)
    m2log_samples = m2_samples * log_factor
    count = abs_d.shape[0]
    return {
        "m2": float(m2_samples.mean()),
        "m2_stderr": float(m2_samples.std(ddof=1) / math.sqrt(count)),
        "m2log": float(m2log_samples.mean()),
        "m2log_stderr": float(m2log_samples.std(ddof=1) / math.sqrt(count)),
    }


def stein_bound_rhs(lam: float, m2log: float, xi_hs_mean: float, d: int | None = None) -> float:
    """Bracketed Stein-bound right side with C = 1.

    xi_hs_mean is the sqrt(d)-scaled quantity from xi_components; pass d to
    apply the sqrt(d) factor here instead when supplying a raw E||Xi||_HS.
    """
    if lam == 0.0 or not math.isfinite(lam):
        raise ConfigError("lambda must be nonzero")
    xi_term = math.sqrt(d) * xi_hs_mean if d is not None else xi_hs_mean
    return m2log / abs(lam) + xi_term

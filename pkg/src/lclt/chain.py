"""Constant step-size Euler-Maruyama chain simulation.

The chain is X_{k+1} = X_k - eta * grad U(X_k) + sqrt(2 eta) * xi_{k+1} with
i.i.d. standard normal innovations.  Runs are bit-for-bit reproducible from
(seed, config): the start draw consumes the STREAM_START stream, innovations
the STREAM_CHAIN stream, replicas XOR their index into the seed.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .errors import ConfigError, DimensionMismatchError, UnsupportedStartError
from .potentials import KIND_QUADRATIC, PotentialSpec, grad_u
from .spd import SpdMatrix, sqrt_spd

START_ZERO = "zero"
START_GAUSSIAN_EXACT = "gaussian_exact"
START_WARMUP = "warmup"

# Dense trajectories above this length are refused; use the streaming helpers.
MAX_DENSE_STEPS = 2**24

TRAJECTORY_MAGIC = b"LCLT"
TRAJECTORY_VERSION = 1


def default_warmup(spec: PotentialSpec, eta: float) -> int:
    """Burn-in matched to the e^{-alpha t} mixing rate: ceil(10 / (alpha eta))."""
    return int(math.ceil(10.0 / (spec.alpha * eta)))


@dataclass(frozen=True)
class ChainConfig:
    eta: float
    n: int
    d: int
    seed: int
    warmup: int | None = None
    start: str = START_ZERO

    def validate(self, spec: PotentialSpec) -> None:
        if self.d != spec.dim:
            raise DimensionMismatchError(f"config d={self.d} but potential dim={spec.dim}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not (0.0 < self.eta < spec.eta_max):
            raise ConfigError(
                f"eta={self.eta} outside the admissible range (0, alpha/(2 beta^2)) = (0, {spec.eta_max:.6g})"
            )
        if self.start not in (START_ZERO, START_GAUSSIAN_EXACT, START_WARMUP):
            raise ConfigError(f"unknown start {self.start!r}")
        if self.start == START_GAUSSIAN_EXACT and spec.kind != KIND_QUADRATIC:
            raise UnsupportedStartError("gaussian_exact start is only available for quadratic potentials")

    def resolved_warmup(self, spec: PotentialSpec) -> int:
        if self.warmup is not None:
            return self.warmup
        return default_warmup(spec, self.eta)


@dataclass(frozen=True)
class ChainRun:
    """A simulated trajectory: states X_0..X_n and innovations xi_1..xi_n."""

    states: np.ndarray       # (n+1, d)
    innovations: np.ndarray  # (n, d); innovations[k] is xi_{k+1}
    config: ChainConfig
    spec: PotentialSpec

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def eta(self) -> float:
        return self.config.eta


def lmc_step(spec: PotentialSpec, eta: float, x, xi) -> np.ndarray:
    """One Euler-Maruyama update x - eta grad U(x) + sqrt(2 eta) xi."""
    if eta <= 0:
        raise ConfigError("eta must be positive")
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.shape != xi.shape:
        raise DimensionMismatchError(f"state shape {x.shape} != innovation shape {xi.shape}")
    return x - eta * grad_u(spec, x) + math.sqrt(2.0 * eta) * xi


def stationary_cov(a: SpdMatrix, eta: float) -> SpdMatrix:
    """Exact stationary covariance of the linear chain (AR(1) fixed point).

    Per eigenvalue lam of A the fixed point of s -> (1-eta lam)^2 s + 2 eta
    is 2 / (lam (2 - eta lam)).
    """
    return a.apply_spectral(lambda lam: 2.0 / (lam * (2.0 - eta * lam)))


def _draw_start(spec: PotentialSpec, config: ChainConfig) -> np.ndarray:
    gen = rng.stream(config.seed, stream_id=rng.STREAM_START)
    if config.start == START_ZERO:
        return np.zeros(config.d)
    if config.start == START_GAUSSIAN_EXACT:
        root = sqrt_spd(stationary_cov(spec.a, config.eta)).entries
        return root @ gen.standard_normal(config.d)
    # warmup: run discarded steps from the origin
    steps = config.resolved_warmup(spec)
    x = np.zeros(config.d)
    if steps == 0:
        return x
    scale = math.sqrt(2.0 * config.eta)
    noise = gen.standard_normal((steps, config.d))
    for k in range(steps):
        x = x - config.eta * grad_u(spec, x) + scale * noise[k]
    return x


def simulate(spec: PotentialSpec, config: ChainConfig) -> ChainRun:
    """Simulate a full chain, storing states and innovations densely."""
    config.validate(spec)
    if config.n > MAX_DENSE_STEPS:
        raise ConfigError(
            f"n={config.n} exceeds the dense-storage cap {MAX_DENSE_STEPS}; "
            "use the streaming helpers (simulate_batch / stationary_fourth_moment)"
        )
    x0 = _draw_start(spec, config)
    innovations = rng.stream(config.seed, stream_id=rng.STREAM_CHAIN).standard_normal((config.n, config.d))
    states = _roll_forward(spec, config.eta, x0, innovations)
    return ChainRun(states=states, innovations=innovations, config=config, spec=spec)


def _roll_forward(spec: PotentialSpec, eta: float, x0: np.ndarray, innovations: np.ndarray) -> np.ndarray:
    n, d = innovations.shape
    states = np.empty((n + 1, d))
    states[0] = x0
    scale = math.sqrt(2.0 * eta)
    x = x0
    for k in range(n):
        x = x - eta * grad_u(spec, x) + scale * innovations[k]
        states[k + 1] = x
    return states


def from_innovations(spec: PotentialSpec, config: ChainConfig, x0, innovations) -> ChainRun:
    """Build a run from explicit initial state and innovations (tests, replays)."""
    innovations = np.asarray(innovations, dtype=float)
    if innovations.shape != (config.n, config.d):
        raise DimensionMismatchError(
            f"innovations shape {innovations.shape} != {(config.n, config.d)}"
        )
    states = _roll_forward(spec, config.eta, np.asarray(x0, dtype=float), innovations)
    return ChainRun(states=states, innovations=innovations, config=config, spec=spec)


def replay_with_replacement(run: ChainRun, index_i: int, xi_new) -> ChainRun:
    """Re-run the recurrence with xi_{index_i} replaced (1-based index)."""
    if not (1 <= index_i <= run.n):
        raise ConfigError(f"replacement index {index_i} outside [1, {run.n}]")
    innovations = run.innovations.copy()
    innovations[index_i - 1] = np.asarray(xi_new, dtype=float)
    states = run.states.copy()
    eta = run.eta
    scale = math.sqrt(2.0 * eta)
    x = states[index_i - 1]
    for k in range(index_i - 1, run.n):
        x = x - eta * grad_u(run.spec, x) + scale * innovations[k]
        states[k + 1] = x
    return ChainRun(states=states, innovations=innovations, config=run.config, spec=run.spec)


def simulate_batch(spec: PotentialSpec, config: ChainConfig, replicas: int,
                   keep_states: bool = False, chunk: int = 8192):
    """Run `replicas` independent chains in lock-step, returning either the
    final running sums needed for ergodic averages or full state arrays.

    Replica r uses the streams of seed XOR r.  Returns a dict with
    'sum_states' (replicas, d) = sum_{k=0}^{n-1} X_k, 'final' (replicas, d),
    and optionally 'states' (n+1, replicas, d) when keep_states is True.
    """
    config.validate(spec)
    if replicas < 1:
        raise ConfigError("replicas must be >= 1")
    d, n, eta = config.d, config.n, config.eta
    scale = math.sqrt(2.0 * eta)

    starts = np.empty((replicas, d))
    gens = []
    for r in range(replicas):
        sub = replace(config, seed=config.seed ^ r)
        starts[r] = _draw_start(spec, sub)
        gens.append(rng.stream(config.seed, replica=r, stream_id=rng.STREAM_CHAIN))

    x = starts
    sum_states = np.zeros((replicas, d))
    states = np.empty((n + 1, replicas, d)) if _keep_states_guard(keep_states, n, replicas, d) else None
    if states is not None:
        states[0] = x
    # keep noise blocks under ~32 MB
    chunk = max(64, min(chunk, 2**22 // max(1, replicas * d)))
    done = 0
    while done < n:
        block = min(chunk, n - done)
        noise = np.stack([g.standard_normal((block, d)) for g in gens], axis=1)
        for j in range(block):
            sum_states += x
            x = x - eta * grad_u(spec, x) + scale * noise[j]
            if states is not None:
                states[done + j + 1] = x
        done += block
    return {"sum_states": sum_states, "final": x, "states": states}


def _keep_states_guard(keep_states: bool, n: int, replicas: int, d: int) -> bool:
    if not keep_states:
        return False
    if (n + 1) * replicas * d > 2**27:
        raise ConfigError("state storage too large; rerun with keep_states=False")
    return True


def stationary_fourth_moment(spec: PotentialSpec, config: ChainConfig, replicas: int) -> dict:
    """Monte Carlo estimate of E_{pi_eta}[|X|^4 + 1] with its standard error.

    Each replica averages V(X_k) = |X_k|^4 + 1 over its post-warmup states;
    the estimate and stderr are across replica means.
    """
    if replicas < 2:
        raise ConfigError("replicas must be >= 2 for a standard error")
    config.validate(spec)
    d, n, eta = config.d, config.n, config.eta
    scale = math.sqrt(2.0 * eta)
    starts = np.empty((replicas, d))
    gens = []
    for r in range(replicas):
        sub = replace(config, seed=config.seed ^ r)
        starts[r] = _draw_start(spec, sub)
        gens.append(rng.stream(config.seed, replica=r, stream_id=rng.STREAM_CHAIN))
    x = starts
    acc = np.zeros(replicas)
    done = 0
    chunk = max(64, min(8192, 2**22 // max(1, replicas * d)))
    while done < n:
        block = min(chunk, n - done)
        noise = np.stack([g.standard_normal((block, d)) for g in gens], axis=1)
        for j in range(block):
            acc += (np.sum(x * x, axis=1)) ** 2 + 1.0
            x = x - eta * grad_u(spec, x) + scale * noise[j]
        done += block
    means = acc / n
    estimate = float(means.mean())
    stderr = float(means.std(ddof=1) / math.sqrt(replicas))
    return {"estimate": estimate, "stderr": stderr, "replica_means": means}


def save_trajectory(run: ChainRun, path) -> None:
    """Binary dump: LCLT magic, version u32, d u32, n u64, eta f64, seed u64,
    then the (n+1, d) states row-major as little-endian float64."""
    header = TRAJECTORY_MAGIC + struct.pack(
        "<IIQdQ", TRAJECTORY_VERSION, run.config.d, run.config.n, run.config.eta, run.config.seed
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(run.states.astype("<f8").tobytes(order="C"))


def load_trajectory(path) -> dict:
    """Read a binary trajectory dump; returns header fields and the states."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TRAJECTORY_MAGIC:
            raise ConfigError(f"bad trajectory magic {magic!r}")
        version, d, n, eta, seed = struct.unpack("<IIQdQ", fh.read(struct.calcsize("<IIQdQ")))
        if version != TRAJECTORY_VERSION:
            raise ConfigError(f"unsupported trajectory version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(n + 1, d)
    return {"version": version, "d": d, "n": n, "eta": eta, "seed": seed, "states": data}


def summary_stats(run: ChainRun) -> dict:
    """Summary statistics of a trajectory for CSV export."""
    x = run.states
    sq = np.sum(x * x, axis=1)
    return {
        "n": run.config.n,
        "d": run.config.d,
        "eta": run.config.eta,
        "seed": run.config.seed,
        "mean_norm_sq": float(sq.mean()),
        "mean_norm_4": float((sq**2).mean()),
        "max_norm": float(np.sqrt(sq.max())),
    }


def export_summary_csv(run: ChainRun, path) -> None:
    stats = summary_stats(run)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(stats.keys()))
        writer.writerow([stats[k] for k in stats])

"""Admissible potentials: strongly convex, smooth, with derivative oracles.

Two closed families are supported.

* quadratic: U(x) = x^T A x / 2 with A symmetric positive definite, so
  grad U = A x, alpha = lambda_min(A), beta = lambda_max(A), and all third
  and higher derivatives vanish.
* logcosh (separable): U(x) = sum_i [ alpha x_i^2 / 2 + eps log cosh x_i ],
  a smooth non-quadratic family with alpha-strong convexity, smoothness
  alpha + eps, and uniformly bounded higher derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .spd import SpdMatrix

KIND_QUADRATIC = "quadratic"
KIND_LOGCOSH = "logcosh"

# Grid maximization window/step for log-cosh derivative bounds; the
# derivatives of log cosh decay like e^{-2|t|} outside this window.
_BOUND_GRID_HALFWIDTH = 20.0
_BOUND_GRID_STEP = 1e-4


def _logcosh_derivative_maxima():
    """Suprema of |d^k/dt^k log cosh t| for k = 3, 4, 5 by grid maximization."""
    t = np.arange(0.0, _BOUND_GRID_HALFWIDTH, _BOUND_GRID_STEP)
    th = np.tanh(t)
    s2 = 1.0 - th * th  # sech^2
    d3 = -2.0 * s2 * th
    d4 = s2 * (4.0 * th * th - 2.0 * s2)
    d5 = s2 * th * (16.0 * s2 - 8.0 * th * th)
    return (
        float(np.abs(d3).max()),
        float(np.abs(d4).max()),
        float(np.abs(d5).max()),
    )


_LC3, _LC4, _LC5 = _logcosh_derivative_maxima()


@dataclass(frozen=True)
class PotentialSpec:
    """Immutable description of one admissible potential."""

    kind: str
    dim: int
    alpha: float
    beta: float
    m_bound: float
    a: SpdMatrix | None = None
    eps: float = 0.0
    lc_alpha: float = 1.0
    _a_diag: np.ndarray | None = field(default=None, repr=False)

    @property
    def eta_max(self) -> float:
        """Upper end of the admissible step-size range alpha / (2 beta^2)."""
        return self.alpha / (2.0 * self.beta**2)

    def is_separable(self) -> bool:
        return self.kind == KIND_LOGCOSH or self._a_diag is not None


def quadratic_potential(a) -> PotentialSpec:
    """Quadratic potential from an SPD matrix or a diagonal given as a 1-d array."""
    a_diag = None
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        if np.any(arr <= 0):
            raise ConfigError("quadratic diagonal must be strictly positive")
        a_diag = arr.copy()
        mat = SpdMatrix(np.diag(arr))
    else:
        mat = a if isinstance(a, SpdMatrix) else SpdMatrix(arr)
        if np.allclose(mat.entries, np.diag(np.diag(mat.entries))):
            a_diag = np.diag(mat.entries).copy()
    alpha, beta = mat.lambda_min(), mat.lambda_max()
    if alpha <= 0:
        raise ConfigError(f"quadratic potential needs a positive definite A (lambda_min={alpha:.3e})")
    return PotentialSpec(
        kind=KIND_QUADRATIC, dim=mat.dim, alpha=alpha, beta=beta,
        m_bound=0.0, a=mat, _a_diag=a_diag,
    )


def logcosh_potential(alpha: float, eps: float, dim: int) -> PotentialSpec:
    """Separable potential with coordinate terms alpha t^2/2 + eps log cosh t."""
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    if dim < 1:
        raise ConfigError("dim must be a positive integer")
    m = eps * max(_LC3, _LC4, _LC5)
    return PotentialSpec(
        kind=KIND_LOGCOSH, dim=dim, alpha=alpha, beta=alpha + eps,
        m_bound=m, eps=eps, lc_alpha=alpha,
    )


def _check_dim(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise DimensionMismatchError(f"expected trailing dimension {spec.dim}, got shape {x.shape}")
    return x


def grad_u(spec: PotentialSpec, x) -> np.ndarray:
    """Gradient of U; broadcasts over leading axes of x."""
    x = _check_dim(spec, x)
    if spec.kind == KIND_QUADRATIC:
        if spec._a_diag is not None:
            return x * spec._a_diag
        return x @ spec.a.entries
    return spec.lc_alpha * x + spec.eps * np.tanh(x)


def hessian_u(spec: PotentialSpec, x) -> SpdMatrix:
    """Hessian of U at a single point x; eigenvalues lie in [alpha, beta]."""
    x = _check_dim(spec, x)
    if x.ndim != 1:
        raise DimensionMismatchError("hessian_u expects a single point")
    if spec.kind == KIND_QUADRATIC:
        return spec.a
    sech2 = 1.0 / np.cosh(x) ** 2
    return SpdMatrix(np.diag(spec.lc_alpha + spec.eps * sech2))


def hessian_diag(spec: PotentialSpec, x) -> np.ndarray:
    """Diagonal of the Hessian for separable potentials; broadcasts over x.

    Only valid when the potential is separable (logcosh, or quadratic with
    diagonal A); used by the Jacobi-flow integrator.
    """
    x = _check_dim(spec, x)
    if spec.kind == KIND_QUADRATIC:
        if spec._a_diag is None:
            raise ConfigError("hessian_diag needs a separable potential")
        return np.broadcast_to(spec._a_diag, x.shape).copy()
    return spec.lc_alpha + spec.eps / np.cosh(x) ** 2


def third_derivative_bound(spec: PotentialSpec) -> float:
    """Certified upper bound on sup_x ||grad^3 U(x)||_op."""
    if spec.kind == KIND_QUADRATIC:
        return 0.0
    # separable: the operator norm of the diagonal 3-tensor is the largest
    # coordinate bound, identical across coordinates here
    return spec.eps * _LC3


@dataclass(frozen=True)
class ScalarPotential:
    """One coordinate of a separable potential with scalar derivatives."""

    a: float = 1.0     # coefficient of t^2/2
    eps: float = 0.0   # coefficient of log cosh t

    @property
    def alpha(self) -> float:
        return self.a

    @property
    def beta(self) -> float:
        return self.a + self.eps

    def u(self, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * self.a * t * t + self.eps * _log_cosh(t)

    def du(self, t):
        t = np.asarray(t, dtype=float)
        return self.a * t + self.eps * np.tanh(t)

    def d2u(self, t):
        t = np.asarray(t, dtype=float)
        return self.a + self.eps / np.cosh(np.clip(t, -350, 350)) ** 2


def _log_cosh(t):
    # overflow-safe log cosh
    at = np.abs(t)
    return at + np.log1p(np.exp(-2.0 * at)) - np.log(2.0)


def scalar_components(spec: PotentialSpec) -> list[ScalarPotential]:
    """Per-coordinate scalar potentials of a separable spec."""
    if spec.kind == KIND_LOGCOSH:
        return [ScalarPotential(a=spec.lc_alpha, eps=spec.eps)] * spec.dim
    if spec._a_diag is not None:
        return [ScalarPotential(a=float(ai)) for ai in spec._a_diag]
    raise ConfigError("potential is not separable; no scalar components")


def potential_to_config(spec: PotentialSpec) -> dict:
    """Serialize to the experiment config dictionary form."""
    if spec.kind == KIND_QUADRATIC:
        if spec._a_diag is not None:
            return {"kind": "quadratic", "a_diag": [float(v) for v in spec._a_diag]}
        return {"kind": "quadratic", "a": [[float(v) for v in row] for row in spec.a.entries]}
    return {"kind": "logcosh", "alpha": spec.lc_alpha, "eps": spec.eps, "dim": spec.dim}


def potential_from_config(cfg: dict) -> PotentialSpec:
    """Inverse of potential_to_config."""
    kind = cfg.get("kind")
    if kind == "quadratic":
        if "a_diag" in cfg:
            return quadratic_potential(np.asarray(cfg["a_diag"], dtype=float))
        if "a" in cfg:
            return quadratic_potential(np.asarray(cfg["a"], dtype=float))
        raise ConfigError("quadratic potential config needs 'a_diag' or 'a'")
    if kind == "logcosh":
        try:
            return logcosh_potential(float(cfg["alpha"]), float(cfg["eps"]), int(cfg["dim"]))
        except KeyError as exc:
            raise ConfigError(f"logcosh potential config missing {exc}") from exc
    raise ConfigError(f"unknown potential kind {kind!r}")

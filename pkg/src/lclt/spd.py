"""Dense symmetric linear algebra: Jacobi eigendecomposition, matrix square
roots, operator/Hilbert-Schmidt norms, and the closed-form Gaussian
2-Wasserstein (Bures) distance.

Self-contained on purpose: the rest of the package routes every spectral
computation through this module so its tolerances are enforced in one place.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, NumericalFailureError, SingularMatrixError

# Centralized numerical tolerances.
TOLERANCES = {
    "eig_offdiag": 1e-12,     # off-diagonal residual relative to ||m||_HS
    "eig_reconstruct": 1e-12,  # eigen cache reconstruction, relative Frobenius
    "sqrt_residual": 1e-10,    # sqrt(m)^2 vs m, relative Frobenius
    "w2_clamp": 1e-10,         # Bures radicand clamp window
    "pd_floor": 1e-14,         # relative eigenvalue floor for "positive definite"
}

MAX_JACOBI_SWEEPS = 64


def _as_square(entries) -> np.ndarray:
    m = np.asarray(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")
    return m


def jacobi_eig(matrix, tol: float | None = None, max_sweeps: int = MAX_JACOBI_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as columns).  Raises
    NumericalFailureError if the off-diagonal mass has not dropped below
    tol * ||m||_HS after max_sweeps sweeps.
    """
    if tol is None:
        tol = TOLERANCES["eig_offdiag"]
    a = _as_square(matrix).copy()
    d = a.shape[0]
    v = np.eye(d)
    if d == 1:
        return a.diagonal().copy(), v
    norm_hs = np.sqrt((a * a).sum())
    if norm_hs == 0.0:
        return np.zeros(d), v

    def offdiag(m):
        return np.sqrt(2.0 * (np.triu(m, 1) ** 2).sum())

    converged = offdiag(a) <= tol * norm_hs
    for _ in range(max_sweeps):
        if converged:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 0.25 * tol * norm_hs / d:
                    continue
                # stable rotation (Golub & Van Loan)
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                vp = c * v[:, p] - s * v[:, q]
                vq = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
        converged = offdiag(a) <= tol * norm_hs
    if not converged:
        raise NumericalFailureError(
            f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
            f"(off-diagonal {offdiag(a):.3e} vs target {tol * norm_hs:.3e})"
        )
    w = a.diagonal().copy()
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


class SpdMatrix:
    """Symmetric matrix with a lazily computed eigendecomposition cache.

    The constructor symmetrizes its input.  Positive (semi)definiteness is a
    property of the values, checked where an operation requires it.
    """

    def __init__(self, entries):
        m = _as_square(entries)
        self.entries = 0.5 * (m + m.T)
        self._eig = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def eig(self):
        """(eigenvalues descending, orthogonal eigenvector matrix)."""
        if self._eig is None:
            self._eig = jacobi_eig(self.entries)
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig[0]

    def lambda_min(self) -> float:
        return float(self.eigenvalues[-1])

    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    def is_positive_definite(self) -> bool:
        return self.lambda_min() > TOLERANCES["pd_floor"] * max(1.0, self.lambda_max())

    def apply_spectral(self, fn) -> "SpdMatrix":
        """Return Q f(Lambda) Q^T for a scalar function fn on the spectrum."""
        w, q = self.eig
        return SpdMatrix((q * fn(w)) @ q.T)

    def trace(self) -> float:
        return float(np.trace(self.entries))

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


def _coerce(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


def eig_sym(m):
    """Spec-level eigendecomposition entry point; accepts SpdMatrix or array."""
    return _coerce(m).eig


def _require_pd(m: SpdMatrix, what: str) -> None:
    lam_min = m.lambda_min()
    if lam_min <= TOLERANCES["pd_floor"] * max(1.0, abs(m.lambda_max())):
        raise SingularMatrixError(f"{what} requires a positive definite matrix (lambda_min={lam_min:.3e})")


def sqrt_spd(m) -> SpdMatrix:
    """Symmetric square root of a positive semidefinite matrix."""
    m = _coerce(m)
    w = m.eigenvalues
    if w[-1] < -TOLERANCES["sqrt_residual"] * max(1.0, w[0]):
        raise SingularMatrixError(f"sqrt_spd needs a PSD matrix (lambda_min={w[-1]:.3e})")
    return m.apply_spectral(lambda lam: np.sqrt(np.clip(lam, 0.0, None)))


def inv_sqrt_spd(m) -> SpdMatrix:
    """Inverse symmetric square root; the matrix must be positive definite."""
    m = _coerce(m)
    _require_pd(m, "inv_sqrt_spd")
    return m.apply_spectral(lambda lam: 1.0 / np.sqrt(lam))


def inv_spd(m) -> SpdMatrix:
    m = _coerce(m)
    _require_pd(m, "inv_spd")
    return m.apply_spectral(lambda lam: 1.0 / lam)


def op_norm(m) -> float:
    """Largest singular value, via the eigendecomposition of m^T m."""
    a = np.asarray(m, dtype=float)
    if isinstance(m, SpdMatrix):
        a = m.entries
    if a.ndim != 2:
        raise DimensionMismatchError(f"op_norm expects a matrix, got shape {a.shape}")
    w, _ = jacobi_eig(a.T @ a)
    return float(np.sqrt(max(w[0], 0.0)))


def hs_norm(m) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    a = m.entries if isinstance(m, SpdMatrix) else np.asarray(m, dtype=float)
    return float(np.sqrt((a * a).sum()))


def gaussian_w2(s1, s2) -> float:
    """Bures 2-Wasserstein distance between centered Gaussians N(0, s1), N(0, s2).

    sqrt( tr s1 + tr s2 - 2 tr (s2^{1/2} s1 s2^{1/2})^{1/2} ); radicands below
    -w2_clamp raise, small negative values are clamped to zero.
    """
    s1, s2 = _coerce(s1), _coerce(s2)
    if s1.dim != s2.dim:
        raise DimensionMismatchError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    root2 = sqrt_spd(s2).entries
    cross = sqrt_spd(root2 @ s1.entries @ root2)
    radicand = s1.trace() + s2.trace() - 2.0 * cross.trace()
    scale = max(1.0, s1.trace() + s2.trace())
    if radicand < -TOLERANCES["w2_clamp"] * scale:
        raise NumericalFailureError(f"negative Bures radicand {radicand:.3e}")
    return float(np.sqrt(max(radicand, 0.0)))

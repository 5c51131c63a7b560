"""Relaxation sweeps and the dense symmetrized-relaxation machinery.

Jacobi and forward Gauss-Seidel sweeps operate on sparse matrices; the
symmetrized operator M^T (M + M^T - A)^{-1} M and the A-convergence
test are dense, desk-scale tools shared with the diagnostics module.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import solve
from scipy.sparse.linalg import spsolve_triangular

from .linalg import dense_sym_eig, estimate_spectral_norm

__all__ = [
    "Relaxation",
    "SpectralEquivalence",
    "relax_sweep",
    "symmetrized_mtilde",
    "is_a_convergent",
    "auto_jacobi_omega",
]


@dataclass(frozen=True)
class Relaxation:
    """A relaxation method: kind, damping weight and sweep count."""

    kind: str
    omega: float = 1.0
    sweeps: int = 1

    def __post_init__(self):
        if self.kind not in ("jacobi", "gauss_seidel"):
            raise ValueError(f"unknown relaxation kind: {self.kind!r}")
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")
        if self.sweeps < 1:
            raise ValueError("need at least one sweep")


@dataclass(frozen=True)
class SpectralEquivalence:
    """Choice of the operator X spectrally equivalent to the symmetrized
    relaxation, with its equivalence constants c1 <= c2.

    x_kind 'diag' uses diag(A); 'identity' uses the identity.  Any
    scaling of X folds into c2, which is why c2 defaults to 1.
    """

    x_kind: str = "diag"
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.x_kind not in ("diag", "identity"):
            raise ValueError(f"unknown X choice: {self.x_kind!r}")
        if not (0.0 < self.c1 <= self.c2):
            raise ValueError("require 0 < c1 <= c2")

    def diagonal(self, A):
        """Diagonal of X for a sparse or dense A (X is diagonal here)."""
        if self.x_kind == "diag":
            d = A.diagonal() if sparse.issparse(A) else np.diag(np.asarray(A))
            return np.asarray(d, dtype=np.float64).copy()
        n = A.shape[0]
        return np.ones(n)

    def matrix(self, A):
        """Dense X for the diagnostics module."""
        return np.diag(self.diagonal(A))


def relax_sweep(rel, A, x, b):
    """Apply `rel.sweeps` relaxation passes to A x = b, returning new x.

    Jacobi uses M = (1/omega) diag(A); Gauss-Seidel uses the lower
    triangle of A including the diagonal, in forward ordering.
    """
    x = np.asarray(x, dtype=np.float64).copy()
    b = np.asarray(b, dtype=np.float64)
    if x.shape[0] != A.shape[0] or b.shape[0] != A.shape[0]:
        raise ValueError("vector lengths do not match the matrix dimension")
    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise ValueError("matrix has a zero diagonal entry")
    if rel.kind == "jacobi":
        for _ in range(rel.sweeps):
            x += rel.omega * (b - A @ x) / diag
    else:
        L = sparse.tril(A, k=0, format="csr")
        for _ in range(rel.sweeps):
            x += spsolve_triangular(L, b - A @ x, lower=True)
    return x


def symmetrized_mtilde(A, M):
    """The symmetrized relaxation operator M^T (M + M^T - A)^{-1} M.

    One application of the result equals a forward sweep with M followed
    by a backward sweep with M^T:  I - Mt^{-1} A = (I - M^{-1}A)(I - M^{-T}A).
    """
    A = np.asarray(A, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    S = M + M.T - A
    try:
        X = solve(S, M)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"M + M^T - A is singular: {err}") from err
    return M.T @ X


def is_a_convergent(A, M):
    """True iff M + M^T - A is SPD, i.e. relaxation with M contracts
    the A-norm of the error."""
    A = np.asarray(A, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    S = M + M.T - A
    S = (S + S.T) / 2.0
    w, _ = dense_sym_eig(S)
    scale = np.linalg.norm(A, 2)
    return bool(w[0] > 1e-12 * scale)


def auto_jacobi_omega(A, coefficient=1.5):
    """Damping weight `coefficient` / rho(diag(A)^{-1} A) for smoothing.

    rho is estimated by power iteration on the symmetrically scaled
    operator D^{-1/2} A D^{-1/2}.  The default coefficient 1.5 balances
    damping of the highest modes against sweep strength across the
    densifying coarse-level operators.
    """
    d = np.asarray(A.diagonal(), dtype=np.float64)
    if np.any(d <= 0.0):
        raise ValueError("matrix diagonal must be positive")
    dinv_sqrt = 1.0 / np.sqrt(d)

    def matvec(v):
        return dinv_sqrt * (A @ (dinv_sqrt * v))

    rho = estimate_spectral_norm(matvec, A.shape[0])
    if rho == 0.0:
        return 1.0
    return coefficient / rho

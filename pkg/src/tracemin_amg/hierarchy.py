"""Multilevel setup, V(1,1) cycling and the outer solve driver.

Each level is coarsened by strength-of-connection and the greedy CF
pass, interpolation is built by weighted or constrained energy
minimization over a distance-k pattern, and the Galerkin product
closes the recursion.  Candidates follow the hierarchy down by
C-point injection.  The coarsest level is factorized densely.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve

from .coarsening import cf_split, pattern_distance_k, strength_graph
from .energymin import (constrained_energymin, prepare_candidates,
                        weighted_energymin)
from .relaxation import Relaxation, SpectralEquivalence, auto_jacobi_omega, relax_sweep

__all__ = [
    "Level",
    "Hierarchy",
    "SetupConfig",
    "galerkin_product",
    "setup",
    "vcycle",
    "solve",
    "measure_convergence_factor",
]


@dataclass
class Level:
    """One level: its operator, interpolation to the next level (absent
    on the coarsest), the CF splitting, and the relaxation used here."""

    A: sparse.csr_matrix
    P: sparse.csr_matrix = None
    split: object = None
    relaxation: Relaxation = None
    emin_residuals: list = None


@dataclass
class Hierarchy:
    levels: list
    coarsest_factorization: object
    fine_candidates: np.ndarray
    config: object = None

    @property
    def n_levels(self):
        return len(self.levels)

    def level_sizes(self):
        return [lvl.A.shape[0] for lvl in self.levels]

    def operator_complexity(self):
        nnz0 = self.levels[0].A.nnz
        return sum(lvl.A.nnz for lvl in self.levels) / nnz0

    def cycle_complexity(self, nu_pre=None, nu_post=None):
        """Work of one V-cycle in fine-grid matvec units:
        (nu_pre + nu_post + 1) * nnz(A_l) / nnz(A_0), summed over levels."""
        if nu_pre is None:
            nu_pre = self.levels[0].relaxation.sweeps
        if nu_post is None:
            nu_post = nu_pre
        nnz0 = self.levels[0].A.nnz
        return sum((nu_pre + nu_post + 1) * lvl.A.nnz for lvl in self.levels) / nnz0


@dataclass
class SetupConfig:
    """Knobs of the multilevel setup.

    mode is 'weighted' or 'constrained'; tau only matters for the
    weighted route.  emin_iters defaults to pattern_degree + 3 (enough
    to fill the pattern plus a few improvement steps).  jacobi_omega
    'auto' damps each level by 4/3 over the estimated spectral radius
    of D^{-1} A.  candidates holds raw constraint vectors (default: the
    constant vector).
    """

    mode: str = "constrained"
    tau: float = 1e-4
    pattern_degree: int = 2
    emin_iters: int = None
    emin_tol: float = 1e-10
    theta_strength: float = 0.4
    max_coarse: int = 100
    max_levels: int = 25
    candidates: np.ndarray = None
    jacobi_omega: object = "auto"
    sweeps: int = 2
    x_equivalence: SpectralEquivalence = field(default_factory=SpectralEquivalence)
    use_preconditioner: bool = True

    def __post_init__(self):
        if self.mode not in ("weighted", "constrained"):
            raise ValueError(f"unknown setup mode: {self.mode!r}")
        if self.max_coarse < 1 or self.pattern_degree < 1 or self.max_levels < 1:
            raise ValueError("max_coarse, pattern_degree and max_levels must be >= 1")

    def iteration_budget(self):
        return self.emin_iters if self.emin_iters is not None \
            else self.pattern_degree + 3


def galerkin_product(P, A):
    """The coarse operator P^T A P, symmetrized against round-off skew
    when A is symmetric."""
    if P.shape[0] != A.shape[0] or A.shape[0] != A.shape[1]:
        raise ValueError("shapes do not conform for P^T A P")
    Ac = (P.T @ (A @ P)).tocsr()
    skew = abs(A - A.T)
    if skew.nnz == 0 or skew.max() <= 1e-14 * abs(A).max():
        Ac = ((Ac + Ac.T) * 0.5).tocsr()
    Ac.sort_indices()
    return Ac


def _level_relaxation(A, cfg):
    omega = cfg.jacobi_omega
    if omega == "auto":
        omega = auto_jacobi_omega(A)
    return Relaxation("jacobi", omega=float(omega), sweeps=cfg.sweeps)


def _split_with_retries(A, theta):
    """Greedy splitting, retrying with a raised threshold on stagnation."""
    for attempt in range(3):
        S = strength_graph(A, theta)
        split = cf_split(S)
        if split.n_f > 0:
            return S, split
        if attempt < 2:
            theta = min(1.0, theta + 0.25)
    raise RuntimeError(
        f"coarsening stagnated: every point became a C point at "
        f"theta_strength={theta} after raising the threshold twice")


def setup(A, cfg):
    """Build a multilevel hierarchy for the SPD matrix A."""
    A = A.tocsr()
    raw = cfg.candidates
    if raw is None:
        raw = np.ones((A.shape[0], 1))
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    fine_candidates = raw.copy()

    levels = []
    while True:
        n = A.shape[0]
        last = len(levels) == cfg.max_levels - 1 or n <= cfg.max_coarse
        if last:
            levels.append(Level(A=A, relaxation=_level_relaxation(A, cfg)))
            break

        S, split = _split_with_retries(A, cfg.theta_strength)
        pattern = pattern_distance_k(S, split, cfg.pattern_degree)
        B = prepare_candidates(A, raw)
        iters = cfg.iteration_budget()
        if cfg.mode == "constrained":
            interp = constrained_energymin(A, split, B, pattern, iters,
                                           tol=cfg.emin_tol)
        else:
            interp = weighted_energymin(A, split, B, cfg.x_equivalence, cfg.tau,
                                        pattern, iters, tol=cfg.emin_tol,
                                        use_preconditioner=cfg.use_preconditioner)
        levels.append(Level(A=A, P=interp.P, split=split,
                            relaxation=_level_relaxation(A, cfg),
                            emin_residuals=interp.residuals))
        A = galerkin_product(interp.P, A)
        raw = raw[split.c_points]  # candidate injection onto the coarse grid

    coarse = levels[-1].A.toarray()
    coarse = (coarse + coarse.T) / 2.0
    factorization = cho_factor(coarse)
    return Hierarchy(levels, factorization, fine_candidates, cfg)


def vcycle(H, level, x, b):
    """One V(1,1) cycle on the given level; returns the updated iterate."""
    lvl = H.levels[level]
    if level == H.n_levels - 1:
        return cho_solve(H.coarsest_factorization, b)
    x = relax_sweep(lvl.relaxation, lvl.A, x, b)
    r = b - lvl.A @ x
    r_coarse = lvl.P.T @ r
    e_coarse = vcycle(H, level + 1, np.zeros(len(r_coarse)), r_coarse)
    x = x + lvl.P @ e_coarse
    return relax_sweep(lvl.relaxation, lvl.A, x, b)


def solve(H, b, tol=1e-8, max_iters=100, accel="stationary", x0=None):
    """Solve A x = b with the hierarchy, stationary or CG-accelerated.

    Stationary mode iterates x <- x + Vcycle(b - A x); cg mode runs
    preconditioned conjugate gradients with one V-cycle as the
    preconditioner.  Returns (x, residual_history) of two-norm
    residuals, starting with the initial one.  Residual growth over 10
    consecutive iterations is reported as a warning, not raised.
    """
    if accel not in ("stationary", "cg"):
        raise ValueError(f"unknown acceleration: {accel!r}")
    A = H.levels[0].A
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros(A.shape[0]) if x0 is None else np.asarray(x0, dtype=np.float64).copy()

    r = b - A @ x
    history = [float(np.linalg.norm(r))]
    if max_iters == 0 or history[0] == 0.0:
        return x, history
    target = tol * history[0]
    growth = 0

    if accel == "stationary":
        for _ in range(max_iters):
            x = x + vcycle(H, 0, np.zeros(len(r)), r)
            r = b - A @ x
            history.append(float(np.linalg.norm(r)))
            if history[-1] <= target:
                break
            growth = growth + 1 if history[-1] > history[-2] else 0
            if growth >= 10:
                warnings.warn("V-cycle iteration diverging: residual grew over "
                              "10 consecutive iterations", RuntimeWarning)
                break
        return x, history

    z = vcycle(H, 0, np.zeros(len(r)), r)
    rz = float(r @ z)
    p = z.copy()
    for _ in range(max_iters):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0 or not np.isfinite(pAp):
            warnings.warn("preconditioned CG lost positive definiteness",
                          RuntimeWarning)
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        history.append(float(np.linalg.norm(r)))
        if history[-1] <= target:
            break
        growth = growth + 1 if history[-1] > history[-2] else 0
        if growth >= 10:
            warnings.warn("preconditioned CG diverging: residual grew over "
                          "10 consecutive iterations", RuntimeWarning)
            break
        z = vcycle(H, 0, np.zeros(len(r)), r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, history


def measure_convergence_factor(H, seed=0, iters=30, window=10):
    """Asymptotic convergence factor of the stationary V-cycle.

    Runs `iters` stationary iterations on A x = 0 from a seeded random
    start and returns (cf, residual_history), where cf is the geometric
    mean of the residual ratios over the last `window` iterations.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(H.levels[0].A.shape[0])
    _, history = solve(H, np.zeros_like(x0), tol=0.0, max_iters=iters,
                       accel="stationary", x0=x0)
    r = np.asarray(history)
    if len(r) < window + 1:
        raise ValueError("not enough iterations to measure a convergence factor")
    if r[-window - 1] == 0.0:
        return 0.0, history
    cf = (r[-1] / r[-window - 1]) ** (1.0 / window)
    return float(cf), history

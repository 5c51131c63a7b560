"""Experiment harness: convergence metrics, the adaptive constraint
protocol, and grid sweeps with CSV emission.

A sweep builds one hierarchy per (mode, tau, energy-minimization
iteration count) grid point, measures the stationary V-cycle
convergence factor, and emits one CSV row per point.  All randomness
flows from the single configuration seed.  The work-per-digit metric
WPD = -CC / log10(CF) prices one order of magnitude of residual
reduction in fine-grid matvec units.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .energymin import prepare_candidates
from .hierarchy import SetupConfig, measure_convergence_factor, setup, solve
from .problems import ProblemSpec, assemble
from .relaxation import Relaxation, auto_jacobi_omega, relax_sweep

__all__ = [
    "ConvergenceReport",
    "ExperimentConfig",
    "convergence_report",
    "measure_report",
    "adaptive_constraints",
    "smoothed_constant",
    "run_experiment",
    "CSV_HEADER",
]

CSV_HEADER = ["problem", "n", "epsilon", "theta", "K", "mode", "tau",
              "pattern_degree", "emin_iters", "n_vecs", "imp_iters", "seed",
              "levels", "oc", "cc", "cf", "wpd", "converged"]


@dataclass
class ConvergenceReport:
    """Measured solver quality: convergence factor, complexities and
    work per digit of accuracy."""

    cf: float
    oc: float
    cc: float
    wpd: float
    iterations: int
    converged: bool


def convergence_report(H, residual_history, window=10):
    """Summarize a residual history against a hierarchy's complexities.

    cf is the geometric mean of the residual ratios over the last
    `window` iterations; wpd = -cc / log10(cf) for 0 < cf < 1, and is
    None (flagged divergent) otherwise.
    """
    r = np.asarray(residual_history, dtype=np.float64)
    if len(r) < 12:
        raise ValueError("need at least 12 residuals to measure convergence")
    if r[-window - 1] == 0.0:
        cf = 0.0
    else:
        cf = float((r[-1] / r[-window - 1]) ** (1.0 / window))
    oc = float(H.operator_complexity())
    cc = float(H.cycle_complexity())
    if cf == 0.0:
        wpd, converged = 0.0, True
    elif 0.0 < cf < 1.0:
        wpd, converged = float(-cc / math.log10(cf)), True
    else:
        wpd, converged = None, False
    return ConvergenceReport(cf=cf, oc=oc, cc=cc, wpd=wpd,
                             iterations=len(r) - 1, converged=converged)


def measure_report(H, seed=0, iters=30):
    """Run the stationary measurement protocol and summarize it."""
    _, history = measure_convergence_factor(H, seed=seed, iters=iters)
    return convergence_report(H, history)


def adaptive_constraints(A, existing, n_vecs, improvement_iters, seed,
                         omega="auto"):
    """Grow the constraint set to n_vecs vectors, adaptively.

    The first vector is a seeded random vector improved by Jacobi
    sweeps on A x = 0; each later vector is a fresh seeded random
    vector improved by V-cycles of the hierarchy built from the
    previous constraints (`existing`), after which the caller rebuilds
    the hierarchy.  Returns the A-orthonormalized candidate set.
    """
    if n_vecs < 1:
        raise ValueError("need at least one constraint vector")
    if n_vecs >= 2 and existing is None:
        raise ValueError(f"constraint vector {n_vecs} requested without a "
                         f"hierarchy built from the previous vectors")
    rng = np.random.default_rng([seed, n_vecs])
    v = rng.standard_normal(A.shape[0])
    if improvement_iters > 0:
        if n_vecs == 1:
            w = auto_jacobi_omega(A) if omega == "auto" else float(omega)
            rel = Relaxation("jacobi", omega=w, sweeps=improvement_iters)
            v = relax_sweep(rel, A, v, np.zeros_like(v))
        else:
            v, _ = solve(existing, np.zeros_like(v), tol=0.0,
                         max_iters=improvement_iters, accel="stationary", x0=v)
    if n_vecs == 1:
        raw = v[:, None]
    else:
        prev = existing.fine_candidates
        if prev.shape[1] != n_vecs - 1:
            raise ValueError(f"existing hierarchy holds {prev.shape[1]} "
                             f"constraint vectors, expected {n_vecs - 1}")
        raw = np.column_stack([prev, v])
    return prepare_candidates(A, raw)


@dataclass
class ExperimentConfig:
    """One sweep: a problem, a mode/tau/iteration grid, and the
    constraint-vector protocol.

    constraint_source 'constant' smooths the constant vector with
    improvement_iters Jacobi sweeps (n_constraint_vectors must be 1);
    'random' runs the adaptive protocol of seeded random vectors.
    """

    problem: ProblemSpec
    modes: list = field(default_factory=lambda: ["constrained"])
    taus: list = field(default_factory=lambda: [1e-1, 1e-4, 1e-7])
    emin_iters: list = field(default_factory=lambda: list(range(1, 20)))
    pattern_degree: int = 4
    n_constraint_vectors: int = 1
    improvement_iters: int = 5
    seed: int = 0
    output: str = None
    constraint_source: str = "constant"
    theta_strength: float = 0.4
    max_levels: int = 25
    max_coarse: int = 100

    def __post_init__(self):
        if not self.modes or not self.emin_iters:
            raise ValueError("mode and iteration grids must be nonempty")
        if any(m not in ("weighted", "constrained") for m in self.modes):
            raise ValueError("modes must be 'weighted' or 'constrained'")
        if "weighted" in self.modes and not self.taus:
            raise ValueError("weighted mode needs a nonempty tau grid")
        if self.constraint_source not in ("constant", "random"):
            raise ValueError("constraint_source must be 'constant' or 'random'")
        if self.constraint_source == "constant" and self.n_constraint_vectors != 1:
            raise ValueError("the smoothed-constant source provides exactly "
                             "one constraint vector")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        problem = data.pop("problem")
        if isinstance(problem, dict):
            problem = ProblemSpec(**problem)
        return cls(problem=problem, **data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _setup_config(cfg, mode, tau, iters, candidates):
    return SetupConfig(mode=mode, tau=0.0 if tau is None else tau,
                       pattern_degree=cfg.pattern_degree, emin_iters=iters,
                       emin_tol=0.0, theta_strength=cfg.theta_strength,
                       max_coarse=cfg.max_coarse, max_levels=cfg.max_levels,
                       candidates=candidates)


def smoothed_constant(A, sweeps):
    v = np.ones(A.shape[0])
    if sweeps > 0:
        rel = Relaxation("jacobi", omega=auto_jacobi_omega(A), sweeps=sweeps)
        v = relax_sweep(rel, A, v, np.zeros_like(v))
    return v[:, None]


def _hierarchy_for_point(A, cfg, mode, tau, iters):
    """Build the hierarchy for one grid point, including the adaptive
    constraint chain when the random source is configured."""
    if cfg.constraint_source == "constant":
        cands = smoothed_constant(A, cfg.improvement_iters)
        return setup(A, _setup_config(cfg, mode, tau, iters, cands))
    cands = adaptive_constraints(A, None, 1, cfg.improvement_iters, cfg.seed)
    H = setup(A, _setup_config(cfg, mode, tau, iters, cands.vectors))
    for k in range(2, cfg.n_constraint_vectors + 1):
        cands = adaptive_constraints(A, H, k, cfg.improvement_iters, cfg.seed)
        H = setup(A, _setup_config(cfg, mode, tau, iters, cands.vectors))
    return H


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def run_experiment(cfg):
    """Run the configured sweep; returns the row dicts and writes the
    CSV when an output path is set.  Deterministic under a fixed seed."""
    problem = assemble(cfg.problem)
    A = problem.matrix
    rows = []
    for mode in cfg.modes:
        taus = cfg.taus if mode == "weighted" else [None]
        for tau in taus:
            for iters in cfg.emin_iters:
                H = _hierarchy_for_point(A, cfg, mode, tau, iters)
                report = measure_report(H, seed=cfg.seed)
                rows.append({
                    "problem": cfg.problem.kind,
                    "n": cfg.problem.n,
                    "epsilon": cfg.problem.epsilon,
                    "theta": cfg.problem.theta,
                    "K": cfg.problem.K,
                    "mode": mode,
                    "tau": tau,
                    "pattern_degree": cfg.pattern_degree,
                    "emin_iters": iters,
                    "n_vecs": cfg.n_constraint_vectors,
                    "imp_iters": cfg.improvement_iters,
                    "seed": cfg.seed,
                    "levels": H.n_levels,
                    "oc": report.oc,
                    "cc": report.cc,
                    "cf": report.cf,
                    "wpd": report.wpd,
                    "converged": report.converged,
                })
    if cfg.output is not None:
        write_csv(cfg.output, rows)
    return rows


def rows_to_csv_text(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_fmt(row[key]) for key in CSV_HEADER])
    return buf.getvalue()


def write_csv(path, rows):
    text = rows_to_csv_text(rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)

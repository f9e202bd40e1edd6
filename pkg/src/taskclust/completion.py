"""Recover a full similarity matrix from partial, possibly corrupted entries.

Solves the convex program

    min ||X||_* + lambda * ||E||_1   s.t.   P_Omega(X + E) = P_Omega(Y)

by an inexact augmented-Lagrangian iteration with singular value
thresholding. X is the low-rank similarity matrix, E a sparse matrix of
wrong observed entries, Omega the set of observed positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError

RHO_CAP = 1e7


@dataclass
class SolverConfig:
    rho0: float | None = None  # None: n^2 / (4 * ||P_Omega(Y)||_1)
    rho_growth: float = 1.2
    tol: float = 1e-7
    max_iter: int = 500
    lambda_override: float | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise InputError("bad-tol", "tol must be positive")
        if self.max_iter < 1:
            raise InputError("bad-max-iter", "max_iter must be >= 1")
        if self.rho_growth < 1:
            raise InputError("bad-rho-growth", "rho_growth must be >= 1")


@dataclass
class CompletionProblem:
    """Observed values Y (zeros off Omega), observation mask, l1 weight."""

    Y: np.ndarray
    omega: np.ndarray
    lam: float

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        self.omega = np.asarray(self.omega, dtype=bool)
        if self.Y.ndim != 2 or self.Y.shape[0] != self.Y.shape[1]:
            raise InputError("bad-shape", f"Y must be square, got {self.Y.shape}")
        if self.omega.shape != self.Y.shape:
            raise InputError("bad-shape", "omega mask must match Y's shape")
        if self.Y.shape[0] < 2:
            raise InputError("bad-shape", "need at least 2 tasks")
        if not self.omega.any():
            raise InputError("empty-mask", "no observed entries")
        if not np.isfinite(self.Y[self.omega]).all():
            raise InputError("non-finite", "observed entries must be finite")
        if self.lam <= 0:
            raise InputError("bad-lambda", "lambda must be positive")

    @property
    def n(self) -> int:
        return self.Y.shape[0]


@dataclass
class CompletionResult:
    X: np.ndarray
    E: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    lam: float
    rho_final: float = field(repr=False, default=0.0)
    presym_asymmetry: float = field(repr=False, default=0.0)

    def objective(self) -> float:
        """||X||_* + lambda * ||E||_1 at the reported point."""
        return nuclear_norm(self.X) + self.lam * np.abs(self.E).sum()


def nuclear_norm(M: np.ndarray) -> float:
    return float(np.linalg.svd(M, compute_uv=False).sum())


def svt(M: np.ndarray, tau: float) -> np.ndarray:
    """Singular value thresholding: prox of tau * nuclear norm at M."""
    if tau <= 0:
        raise InputError("bad-tau", "tau must be positive")
    M = np.asarray(M, dtype=float)
    if not np.isfinite(M).all():
        raise NumericalError("non-finite", "svt input contains NaN or inf")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(M)
    return (U[:, keep] * s[keep]) @ Vt[keep]


def soft_threshold(M: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise sign(m) * max(|m| - tau, 0)."""
    if tau < 0:
        raise InputError("bad-tau", "tau must be nonnegative")
    M = np.asarray(M, dtype=float)
    return np.sign(M) * np.maximum(np.abs(M) - tau, 0.0)


def default_lambda(n: int) -> float:
    return 1.0 / np.sqrt(n)


def complete(problem: CompletionProblem, config: SolverConfig | None = None) -> CompletionResult:
    """Run the augmented-Lagrangian iteration until primal and dual residuals are small.

    Off-Omega positions of E absorb the residual exactly each step, so
    unobserved entries impose no constraint and the multiplier stays zero
    there. The penalty rho is rebalanced (Boyd et al., sec. 3.4.1): grow by
    rho_growth when the primal residual dominates, shrink when the dual one
    does. A monotone rho schedule drives the primal residual to zero while
    the iterate is still far from optimal, so both residuals must be small
    before we stop. The reported X is symmetrized and E restricted to Omega.
    """
    config = config or SolverConfig()
    omega = problem.omega
    lam = problem.lam if config.lambda_override is None else config.lambda_override
    if lam <= 0:
        raise InputError("bad-lambda", "lambda must be positive")

    Yp = np.where(omega, problem.Y, 0.0)
    n = problem.n
    y_norm = np.linalg.norm(Yp)
    denom = max(1.0, y_norm)

    if config.rho0 is not None:
        rho = float(config.rho0)
    else:
        l1 = np.abs(Yp).sum()
        rho = n * n / (4.0 * l1) if l1 > 0 else 1.0
    rho_floor = 1e-7

    X = np.zeros((n, n))
    E = np.zeros((n, n))
    Lam = np.zeros((n, n))

    converged = False
    residual = np.inf
    it = 0
    for it in range(1, config.max_iter + 1):
        X = svt(Yp - E + Lam / rho, 1.0 / rho)
        G = Yp - X + Lam / rho
        E_prev = E
        E = np.where(omega, soft_threshold(G, lam / rho), G)
        R = Yp - X - E
        Lam = Lam + rho * R
        if not (np.isfinite(X).all() and np.isfinite(E).all()):
            raise NumericalError("diverged", f"non-finite iterate at iteration {it}")
        residual = np.linalg.norm(np.where(omega, R, 0.0)) / denom
        dual = rho * np.linalg.norm(E - E_prev) / denom
        if residual < config.tol and dual < config.tol:
            converged = True
            break
        if residual > 10.0 * dual:
            rho = min(rho * config.rho_growth, RHO_CAP)
        elif dual > 10.0 * residual:
            rho = max(rho / config.rho_growth, rho_floor)

    presym = np.linalg.norm(X - X.T) / max(1.0, np.linalg.norm(X))
    X = (X + X.T) / 2.0
    E = np.where(omega, E, 0.0)
    return CompletionResult(
        X=X,
        E=E,
        iterations=it,
        final_residual=float(residual),
        converged=converged,
        lam=lam,
        rho_final=rho,
        presym_asymmetry=float(presym),
    )


def clip_to_unit(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Clip to [0, 1] for clustering; also report the fraction of entries clipped."""
    clipped = np.clip(X, 0.0, 1.0)
    frac = float(np.mean(clipped != X))
    return clipped, frac

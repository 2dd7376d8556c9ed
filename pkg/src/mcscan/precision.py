"""CLIME estimation of a precision matrix.

Row i of the estimate solves ``min |m|_1`` subject to
``|Sigma m - e_i|_inf <= eta / sqrt(n_used)``; rows are independent and the
result is not symmetrised.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import IntervalGram
from .errors import InfeasibleError
from .estimation import interleaved_folds
from .lp import solve_l1_constrained

DEFAULT_ETA_GRID = 10
ETA_RATIO = 10 ** -2.5


@dataclass(frozen=True)
class PrecisionEstimate:
    omega: np.ndarray
    eta: float
    n_used: int
    feasibility_slack: float


def _row_path(G, i, radii):
    """Solutions of row i along decreasing radii; None once infeasible."""
    target = np.zeros(G.shape[0])
    target[i] = 1.0
    out, basis = [], None
    for r in radii:
        try:
            sol = solve_l1_constrained(G, target, r, basis)
        except InfeasibleError:
            out.extend([None] * (len(radii) - len(out)))
            break
        basis = sol
        out.append(sol)
    return out


def _map_rows(fn, p, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(p)))
    return [fn(i) for i in range(p)]


def clime(gram, n_used: int, eta: float, threads: int = 1) -> PrecisionEstimate:
    """CLIME with constraint ``sqrt(n_used) |M Sigma - I|_inf <= eta``."""
    Sig = gram.sigma_hat if isinstance(gram, IntervalGram) else np.asarray(gram, dtype=np.float64)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    G = np.ascontiguousarray(Sig.T)
    radius = eta / math.sqrt(n_used)

    def row(i):
        target = np.zeros(G.shape[0])
        target[i] = 1.0
        try:
            return solve_l1_constrained(G, target, radius)
        except InfeasibleError as exc:
            raise InfeasibleError(f"CLIME row {i} infeasible: {exc}", exc.coordinate, row=i) from None

    sols = _map_rows(row, G.shape[0], threads)
    omega = np.vstack([s.a for s in sols])
    return PrecisionEstimate(omega, float(eta), int(n_used), max(s.slack for s in sols))


def eta_grid(n: int, grid_size: int = DEFAULT_ETA_GRID) -> np.ndarray:
    """Log-spaced eta from sqrt(n) (the zero matrix is feasible) downwards."""
    top = math.sqrt(n)
    if grid_size == 1:
        return np.array([top * 0.1])
    return top * np.logspace(-0.3, math.log10(ETA_RATIO), grid_size)


def cv_eta(
    X: np.ndarray,
    folds: int = 5,
    grid_size: int = DEFAULT_ETA_GRID,
    threads: int = 1,
) -> float:
    """Cross-validated eta for the rows ``X`` of one segment.

    Folds interleave the time positions; the held-out loss is
    ``|Omega_train Sigma_test - I|_inf`` averaged over folds.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if folds < 2 or n < 2 * min(folds, n // 2) or folds > n:
        raise ValueError("segment too short for the requested folds")
    grid = eta_grid(n, grid_size)
    if grid.size == 1:
        return float(grid[0])
    labels = interleaved_folds(n, folds)
    losses = np.zeros(grid.size)
    eye = np.eye(p)
    for f in range(folds):
        test = labels == f
        Xtr, Xte = X[~test], X[test]
        G = Xtr.T @ Xtr / Xtr.shape[0]
        Sig_te = Xte.T @ Xte / Xte.shape[0]
        radii = grid / math.sqrt(Xtr.shape[0])
        paths = _map_rows(lambda i: _row_path(G, i, radii), p, threads)
        for g in range(grid.size):
            rows = [path[g] for path in paths]
            if any(r is None for r in rows):
                losses[g:] = np.inf
                break
            omega = np.vstack([r.a for r in rows])
            losses[g] += np.max(np.abs(omega @ Sig_te - eye))
    return float(grid[int(np.argmin(losses))])

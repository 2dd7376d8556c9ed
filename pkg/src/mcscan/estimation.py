"""Direct estimation of the differential parameter at a change point.

For a split k of the interval (s, e] both estimators work with the local gram
matrix ``Sigma`` over (s, e] and the covariance difference
``d = g_{k,e} - g_{s,k}``:

* LOPE  minimises 0.5 a' Sigma a - a' d + lam / c * |a|_1
* CLOM  minimises |a|_1 subject to c * |Sigma a - d|_inf <= lam

where ``c = sqrt((k - s)(e - k) / (e - s))`` is the location factor.  LOPE is
solved by cyclic coordinate descent, CLOM by the dual simplex in :mod:`.lp`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .core import RegressionDataset
from .errors import ConvergenceWarning, DomainError, InfeasibleError
from .lp import L1Solution, solve_l1_constrained

CD_TOL = 1e-8
CV_TOL = 1e-6  # fits inside the CV path only rank lambdas
CD_MAX_SWEEPS = 10_000
DEFAULT_GRID = 100
DEFAULT_FOLDS = 5
SATURATION = 0.999


@dataclass(frozen=True)
class AnchorInterval:
    j: int
    a: int
    b: int
    delta_hat: int
    theta_hat: int

    @property
    def location_factor(self) -> float:
        return location_factor(self.a, self.theta_hat, self.b)


@dataclass(frozen=True)
class DiffEstimate:
    delta: np.ndarray
    method: str
    lam: float
    interval: tuple[int, int, int]  # (s, k, e)
    kkt_residual: float
    converged: bool = True
    anchor: AnchorInterval | None = field(default=None, repr=False)


def location_factor(s: int, k: int, e: int) -> float:
    return math.sqrt((k - s) * (e - k) / (e - s))


def _check_split(data: RegressionDataset, s: int, k: int, e: int) -> None:
    if not (0 <= s < k < e <= data.n):
        raise DomainError(f"need 0 <= s < k < e <= n, got ({s}, {k}, {e})")


def anchor_intervals(change_points: Sequence[int], n: int) -> list[AnchorInterval]:
    """Symmetric intervals isolating each change point.

    The half-width is min(t_j - floor((2 t_{j-1} + t_j) / 3),
    ceil((t_j + 2 t_{j+1}) / 3) - t_j) with t_0 = 0 and t_{q+1} = n.
    """
    cps = [int(c) for c in change_points]
    if any(not 0 < c < n for c in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
        raise DomainError("change points must be strictly increasing inside (0, n)")
    bounds = [0, *cps, n]
    out = []
    for j in range(1, len(bounds) - 1):
        prev, cur, nxt = bounds[j - 1], bounds[j], bounds[j + 1]
        left = cur - (2 * prev + cur) // 3
        right = -((-(cur + 2 * nxt)) // 3) - cur
        half = min(left, right)
        out.append(AnchorInterval(j, cur - half, cur + half, half, cur))
    return out


def local_stats(X: np.ndarray, y: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix of all rows and mean(x y | rows >= k) - mean(x y | rows < k)."""
    z = X * y[:, None]
    gram = X.T @ X / X.shape[0]
    return gram, z[k:].mean(axis=0) - z[:k].mean(axis=0)


@njit(cache=True)
def _cd_pass(Sig, g, lam, a, idx, m):
    # one cyclic pass over idx[:m]; returns (largest step, largest |a_i| seen)
    p = a.shape[0]
    max_step = 0.0
    max_abs = 0.0
    for t in range(m):
        i = idx[t]
        sii = Sig[i, i]
        if sii <= 0.0:
            continue
        old = a[i]
        z = sii * old - g[i]
        if z > lam:
            new = (z - lam) / sii
        elif z < -lam:
            new = (z + lam) / sii
        else:
            new = 0.0
        step = new - old
        if step != 0.0:
            a[i] = new
            for j in range(p):
                g[j] += Sig[j, i] * step
            if abs(step) > max_step:
                max_step = abs(step)
        if abs(new) > max_abs:
            max_abs = abs(new)
    return max_step, max_abs


@njit(cache=True)
def _cd_quadratic(Sig, d, lam, a, tol, max_sweeps):
    # minimise 0.5 a'Sig a - a'd + lam |a|_1 in place; returns sweeps used or -1.
    # Full sweeps alternate with sweeps restricted to the current nonzeros.
    p = a.shape[0]
    g = Sig @ a - d
    every = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    sweeps = 0
    while sweeps < max_sweeps:
        max_step, max_abs = _cd_pass(Sig, g, lam, a, every, p)
        sweeps += 1
        if max_step <= tol * (1.0 + max_abs):
            return sweeps
        m = 0
        for i in range(p):
            if a[i] != 0.0:
                active[m] = i
                m += 1
        while sweeps < max_sweeps:
            max_step, max_abs = _cd_pass(Sig, g, lam, a, active, m)
            sweeps += 1
            if max_step <= tol * (1.0 + max_abs):
                break
    return -1


def kkt_residual(Sig: np.ndarray, d: np.ndarray, lam: float, a: np.ndarray) -> float:
    """Largest violation of the subgradient optimality conditions."""
    g = Sig @ a - d
    active = a != 0
    viol = np.where(active, np.abs(g + lam * np.sign(a)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


def solve_quadratic_l1(Sig, d, lam_eff, warm=None, tol=CD_TOL, max_sweeps=CD_MAX_SWEEPS):
    """Coordinate descent for 0.5 a'Sig a - a'd + lam_eff |a|_1.

    Returns (a, converged).  Sweep order is fixed (0..p-1).
    """
    Sig = np.ascontiguousarray(Sig, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    a = np.zeros(d.shape[0]) if warm is None else np.array(warm, dtype=np.float64)
    sweeps = _cd_quadratic(Sig, d, float(lam_eff), a, tol, max_sweeps)
    return a, sweeps >= 0


def lope_from_stats(Sig, d, lam, s, k, e, warm=None, tol=CD_TOL) -> DiffEstimate:
    lam_eff = lam / location_factor(s, k, e)
    a, ok = solve_quadratic_l1(Sig, d, lam_eff, warm, tol)
    res = kkt_residual(Sig, d, lam_eff, a)
    if not ok:
        warnings.warn(
            f"LOPE stopped after {CD_MAX_SWEEPS} sweeps (KKT residual {res:.2e})",
            ConvergenceWarning,
            stacklevel=3,
        )
    return DiffEstimate(a, "LOPE", float(lam), (s, k, e), res, ok)


def lope(data: RegressionDataset, s: int, k: int, e: int, lam: float, warm=None) -> DiffEstimate:
    _check_split(data, s, k, e)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    Sig, d = local_stats(data.X[s:e], data.y[s:e], k - s)
    return lope_from_stats(Sig, d, lam, s, k, e, warm)


def clom_from_stats(Sig, d, lam, s, k, e, basis=None) -> tuple[DiffEstimate, L1Solution]:
    sol = solve_l1_constrained(Sig, d, lam / location_factor(s, k, e), basis)
    return DiffEstimate(sol.a, "CLOM", float(lam), (s, k, e), sol.slack), sol


def clom(data: RegressionDataset, s: int, k: int, e: int, lam: float) -> DiffEstimate:
    _check_split(data, s, k, e)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    Sig, d = local_stats(data.X[s:e], data.y[s:e], k - s)
    return clom_from_stats(Sig, d, lam, s, k, e)[0]


def lambda_max(data: RegressionDataset, s: int, k: int, e: int) -> float:
    """Smallest lambda at which both LOPE and CLOM return zero."""
    _, d = local_stats(data.X[s:e], data.y[s:e], k - s)
    return location_factor(s, k, e) * float(np.max(np.abs(d)))


def lambda_grid(lam_max: float, grid_size: int = DEFAULT_GRID, ratio: float = 1e-3) -> np.ndarray:
    if not (lam_max > 0 and math.isfinite(lam_max)) or grid_size < 1:
        raise ValueError("degenerate lambda grid")
    if grid_size == 1:
        return np.array([lam_max])
    return lam_max * np.logspace(0.0, math.log10(ratio), grid_size)


def interleaved_folds(length: int, folds: int, offset: int = 0) -> np.ndarray:
    """Fold label of each position: position modulo the fold count."""
    return (np.arange(length) + offset) % folds


def _split_folds(n_left: int, n_right: int, folds: int) -> np.ndarray:
    # folds are interleaved within each side of the split separately
    return np.concatenate([interleaved_folds(n_left, folds), interleaved_folds(n_right, folds)])


def cv_lambda(
    data: RegressionDataset,
    s: int,
    k: int,
    e: int,
    method: str = "lope",
    grid_size: int = DEFAULT_GRID,
    folds: int = DEFAULT_FOLDS,
) -> float:
    """Cross-validated lambda for LOPE or CLOM on the split (s, k, e).

    The held-out loss is the quadratic LOPE loss evaluated with the test
    fold's gram matrix and covariance difference, which equals the squared
    prediction error of the equivalent stacked regression up to a constant.
    When there are fewer training rows than regressors, a fold's LOPE path
    stops once the fit has as many nonzeros as training rows or attains 99.9%
    of the minimal training objective; smaller lambdas are then excluded.
    """
    _check_split(data, s, k, e)
    if e - s < 2 * folds:
        raise DomainError("interval too short for the requested number of folds")
    method = method.lower()
    if method not in ("lope", "clom"):
        raise ValueError(f"unknown method {method!r}")
    grid = lambda_grid(lambda_max(data, s, k, e), grid_size)
    if grid.size == 1:
        return float(grid[0])
    X, y = data.X[s:e], data.y[s:e]
    nl, nr = k - s, e - k
    labels = _split_folds(nl, nr, folds)
    side = np.r_[np.zeros(nl, bool), np.ones(nr, bool)]
    losses = np.zeros(grid.size)
    for f in range(folds):
        test = labels == f
        train = ~test
        if not (test[~side].any() and test[side].any() and train[~side].any() and train[side].any()):
            continue
        Xtr, ytr = X[train], y[train]
        ktr = int(np.count_nonzero(train & ~side))
        Sig_tr, d_tr = local_stats(Xtr, ytr, ktr)
        Sig_te, d_te = local_stats(X[test], y[test], int(np.count_nonzero(test & ~side)))
        m = Xtr.shape[0]
        warm, basis, saturated = None, None, False
        f_floor = 0.0
        if method == "lope" and m < Sig_tr.shape[0]:
            # attainable minimum of the training objective, -d' Sig^+ d / 2
            f_floor = -0.5 * float(d_tr @ np.linalg.lstsq(Sig_tr, d_tr, rcond=None)[0])
        for g, lam in enumerate(grid):
            if method == "lope":
                if saturated:
                    losses[g:] = np.inf
                    break
                est = lope_from_stats(Sig_tr, d_tr, lam, 0, ktr, m, warm, CV_TOL)
                warm = est.delta
                # past this point the fit is not unique and descent stalls
                saturated = np.count_nonzero(warm) >= m or (
                    f_floor < 0 and 0.5 * warm @ Sig_tr @ warm - warm @ d_tr <= SATURATION * f_floor
                )
            else:
                try:
                    est, basis = clom_from_stats(Sig_tr, d_tr, lam, 0, ktr, m, basis)
                except InfeasibleError:
                    losses[g:] = np.inf
                    break
            a = est.delta
            losses[g] += 0.5 * a @ Sig_te @ a - a @ d_te
    return float(grid[int(np.argmin(losses))])


def naive_diff(
    data: RegressionDataset, s: int, k: int, e: int, lam0: float, lam1: float
) -> DiffEstimate:
    """Difference of two Lasso fits, on (s, k] and on (k, e]."""
    _check_split(data, s, k, e)
    betas, res = [], 0.0
    for lo, hi, lam in ((s, k, lam0), (k, e, lam1)):
        X, y = data.X[lo:hi], data.y[lo:hi]
        Sig, c = X.T @ X / (hi - lo), X.T @ y / (hi - lo)
        b, _ = solve_quadratic_l1(Sig, c, lam)
        res = max(res, kkt_residual(Sig, c, lam, b))
        betas.append(b)
    return DiffEstimate(betas[1] - betas[0], "NAIVE", float(max(lam0, lam1)), (s, k, e), res)


def cv_lasso(X: np.ndarray, y: np.ndarray, grid_size: int = DEFAULT_GRID, folds: int = DEFAULT_FOLDS) -> float:
    """Cross-validated penalty for a plain Lasso (no intercept), interleaved folds."""
    n = X.shape[0]
    lam_max = float(np.max(np.abs(X.T @ y))) / n
    grid = lambda_grid(lam_max, grid_size)
    if grid.size == 1:
        return float(grid[0])
    labels = interleaved_folds(n, folds)
    losses = np.zeros(grid.size)
    for f in range(folds):
        test = labels == f
        Xtr, ytr = X[~test], y[~test]
        Sig, c = Xtr.T @ Xtr / Xtr.shape[0], Xtr.T @ ytr / Xtr.shape[0]
        b = None
        for g, lam in enumerate(grid):
            b, _ = solve_quadratic_l1(Sig, c, lam, b)
            losses[g] += np.mean((y[test] - X[test] @ b) ** 2)
    return float(grid[int(np.argmin(losses))])


def estimate(
    data: RegressionDataset,
    anchor: AnchorInterval,
    method: str = "lope",
    lam: float | str = "cv",
    grid_size: int = DEFAULT_GRID,
    folds: int = DEFAULT_FOLDS,
) -> DiffEstimate:
    """Estimate delta_j on its anchor interval with a fixed or cross-validated lambda."""
    if anchor.delta_hat < 2:
        raise DomainError(f"anchor interval of change {anchor.j} is too short (half-width {anchor.delta_hat})")
    s, k, e = anchor.a, anchor.theta_hat, anchor.b
    method = method.lower()
    if method == "naive":
        if lam == "cv":
            lam0 = cv_lasso(data.X[s:k], data.y[s:k], grid_size, folds)
            lam1 = cv_lasso(data.X[k:e], data.y[k:e], grid_size, folds)
        else:
            lam0 = lam1 = float(lam)
        est = naive_diff(data, s, k, e, lam0, lam1)
    else:
        if lam == "cv":
            lam = cv_lambda(data, s, k, e, method, grid_size, folds)
        est = lope(data, s, k, e, float(lam)) if method == "lope" else clom(data, s, k, e, float(lam))
    return DiffEstimate(est.delta, est.method, est.lam, est.interval, est.kkt_residual, est.converged, anchor)


def estimate_all(
    data: RegressionDataset,
    change_points: Sequence[int],
    method: str = "lope",
    lam: float | str = "cv",
    grid_size: int = DEFAULT_GRID,
    folds: int = DEFAULT_FOLDS,
) -> list[DiffEstimate]:
    return [
        estimate(data, anchor, method, lam, grid_size, folds)
        for anchor in anchor_intervals(change_points, data.n)
    ]

"""Dense dual simplex for constrained l1 minimisation.

Solves the Dantzig-type linear program

    minimise |a|_1  subject to  |G a - d|_i <= r_i  for every row i,

which covers both the CLOM estimator (G = local gram, d = covariance
difference) and each CLIME row (G = gram, d = unit vector).  With a = u - v and
slacks s, t >= 0 the standard form is

    [ G  -G  I  0 ] [u v s t]' = [d + r]
    [-G   G  0  I ]              [r - d],   cost (1, 1, 0, 0).

All costs are nonnegative, so the slack basis is dual feasible and the dual
simplex can start from it without a phase one.  Changing ``r`` only changes the
right-hand side, so the optimal basis of one radius is a dual-feasible warm
start for the next, which makes sweeping a tuning grid cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InfeasibleError, StageError

PIVOT_TOL = 1e-9
REFACTOR_EVERY = 200


@dataclass
class L1Solution:
    a: np.ndarray
    basis: np.ndarray
    iterations: int
    slack: float  # max_i |G a - d|_i - r_i  (<= 0 when feasible)
    binv: np.ndarray | None = field(default=None, repr=False)
    age: int = 0  # pivots applied to binv since it was last refactorised


def _constraint_matrix(G: np.ndarray) -> np.ndarray:
    m = G.shape[0]
    I = np.eye(m)
    Z = np.zeros((m, m))
    return np.block([[G, -G, I, Z], [-G, G, Z, I]])


_OPTIMAL = -1
_BUDGET = -2


@njit(cache=True)
def _pivots(G, basis, Binv, xB, dj, is_basic, feas_tol, budget):
    """Run up to ``budget`` dual simplex pivots in place.

    Returns (status, pivots): status is _OPTIMAL, _BUDGET, or the index of a
    primal-infeasible basis row proving the problem infeasible.
    """
    m, p = G.shape
    nvar = 2 * p + 2 * m
    alpha = np.empty(nvar)
    col = np.empty(2 * m)
    colfull = np.empty(2 * m)
    w = np.empty(p)
    for it in range(budget + 1):
        r_row = np.argmin(xB)
        if xB[r_row] >= -feas_tol:
            return _OPTIMAL, it
        if it == budget:
            return _BUDGET, it
        w[:] = 0.0
        for i in range(m):
            h = Binv[r_row, i] - Binv[r_row, m + i]
            if h != 0.0:
                for j in range(p):
                    w[j] += h * G[i, j]
        for j in range(p):
            alpha[j] = w[j]
            alpha[p + j] = -w[j]
        for i in range(2 * m):
            alpha[2 * p + i] = Binv[r_row, i]
        amax = 0.0
        for j in range(nvar):
            if is_basic[j]:
                alpha[j] = 0.0
            elif abs(alpha[j]) > amax:
                amax = abs(alpha[j])
        cut = -PIVOT_TOL * max(1.0, amax)
        best = np.inf
        for j in range(nvar):
            if alpha[j] < cut:
                ratio = dj[j] / -alpha[j]
                if ratio < best:
                    best = ratio
        if best == np.inf:
            return r_row, it
        # largest pivot among near-ties
        q = -1
        tie = best + 1e-12 * max(1.0, best)
        for j in range(nvar):
            if alpha[j] < cut and dj[j] / -alpha[j] <= tie:
                if q < 0 or alpha[j] < alpha[q]:
                    q = j
        # entering column of the constraint matrix, mapped through Binv
        if q < 2 * p:
            g = q if q < p else q - p
            sgn = 1.0 if q < p else -1.0
            for i in range(m):
                colfull[i] = sgn * G[i, g]
                colfull[m + i] = -sgn * G[i, g]
            for i in range(2 * m):
                acc = 0.0
                for k in range(2 * m):
                    acc += Binv[i, k] * colfull[k]
                col[i] = acc
        else:
            for i in range(2 * m):
                col[i] = Binv[i, q - 2 * p]
        piv = col[r_row]
        step = xB[r_row] / piv
        for i in range(2 * m):
            xB[i] -= step * col[i]
        xB[r_row] = step
        ratio = dj[q] / alpha[q]
        for j in range(nvar):
            dj[j] = max(dj[j] - ratio * alpha[j], 0.0)
        leaving = basis[r_row]
        dj[leaving] = -ratio
        dj[q] = 0.0
        is_basic[leaving] = False
        is_basic[q] = True
        basis[r_row] = q
        for k in range(2 * m):
            Binv[r_row, k] /= piv
        for i in range(2 * m):
            c = col[i]
            if i != r_row and c != 0.0:
                for k in range(2 * m):
                    Binv[i, k] -= c * Binv[r_row, k]
    return _BUDGET, budget


def _apply(G, x, p):
    """Constraint matrix times the full variable vector, using its structure."""
    Ga = G @ (x[:p] - x[p : 2 * p])
    m = G.shape[0]
    return np.concatenate([Ga + x[2 * p : 2 * p + m], -Ga + x[2 * p + m :]])


def solve_l1_constrained(
    G: np.ndarray,
    d: np.ndarray,
    r,
    basis: "np.ndarray | L1Solution | None" = None,
    max_iter: int | None = None,
) -> L1Solution:
    """Minimise |a|_1 subject to |G a - d| <= r elementwise.

    ``basis`` warm-starts from a previous solve with the same G (an
    :class:`L1Solution` or its basis indices); any right-hand side is allowed.
    Raises :class:`InfeasibleError` naming a row when no feasible point exists.
    """
    G = np.asarray(G, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    m, p = G.shape
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), (m,))
    if np.any(r < 0):
        raise ValueError("constraint radius must be nonnegative")
    nvar = 2 * p + 2 * m
    rhs = np.concatenate([d + r, r - d])
    cost = np.concatenate([np.ones(2 * p), np.zeros(2 * m)])
    scale = max(1.0, float(np.max(np.abs(rhs))))
    feas_tol = 1e-11 * scale

    def refactor():
        return np.linalg.inv(_constraint_matrix(G)[:, basis])

    age = 0
    if basis is None:
        basis = np.arange(2 * p, nvar, dtype=np.int64)
        Binv = np.eye(2 * m)
    elif isinstance(basis, L1Solution) and basis.binv is not None:
        Binv, age = basis.binv.copy(), basis.age
        basis = basis.basis.copy()
    else:
        basis = np.array(getattr(basis, "basis", basis), dtype=np.int64)
        Binv = refactor()
    xB = Binv @ rhs

    def reduced_costs():
        y = cost[basis] @ Binv  # duals, length 2m
        yG = (y[:m] - y[m:]) @ G
        dj = cost - np.concatenate([yG, -yG, y])
        dj[basis] = 0.0
        return np.maximum(dj, 0.0)

    dj = reduced_costs()
    is_basic = np.zeros(nvar, dtype=bool)
    is_basic[basis] = True

    max_iter = max_iter or 50 * (2 * m + 2 * p)
    it = 0
    while True:
        budget = min(max(REFACTOR_EVERY - age, 0), max_iter - it)
        status, done = _pivots(G, basis, Binv, xB, dj, is_basic, feas_tol, budget)
        it += done
        age += done
        if status == _OPTIMAL:
            break
        if status >= 0:
            row = status % m
            raise InfeasibleError(
                f"constraint on coordinate {row} cannot be satisfied", coordinate=row
            )
        if it >= max_iter:
            raise StageError("dual simplex iteration limit reached", stage="lp")
        Binv = refactor()
        age = 0
        xB = Binv @ rhs
        dj = reduced_costs()

    # one step of iterative refinement for an accurate primal point
    x = np.zeros(nvar)
    x[basis] = xB
    x[basis] += Binv @ (rhs - _apply(G, x, p))
    np.maximum(x, 0.0, out=x)
    a = x[:p] - x[p : 2 * p]
    slack = float(np.max(np.abs(G @ a - d) - r)) if m else 0.0
    return L1Solution(a, basis.copy(), it, slack, Binv, age)

"""De-sparsified differential estimates and simultaneous confidence bands.

For a change at theta inside (a, b] with LOPE estimate ``delta_hat`` and a
precision estimate ``Omega``, the bias-corrected estimate is

    delta_tilde = delta_hat - Omega (Sigma_ab delta_hat - g_{theta,b} + g_{a,theta}),

and ``c * (delta_tilde - delta)`` with ``c = sqrt((theta-a)(b-theta)/(b-a))`` is
approximately N(0, Omega Gamma Omega').  Bands have the common half-width
``C / c`` where C is a Monte Carlo quantile of the sup-norm, drawn either from
the Gaussian limit or from a multiplier bootstrap.

Monte Carlo draws are generated in fixed blocks, each seeded from
``(seed, band, block)``, so the output does not depend on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RegressionDataset
from .errors import DomainError, InfeasibleError, InputError, StageError
from .estimation import anchor_intervals, cv_lambda, local_stats, location_factor, lope
from .precision import clime, cv_eta
from .simulate import RNG_NAME

DEFAULT_B = 999
BLOCK = 64
PSD_TOL = 1e-6


@dataclass(frozen=True)
class SplitData:
    even: RegressionDataset
    odd: RegressionDataset
    n0: int
    even_index: np.ndarray  # 0-based original rows
    odd_index: np.ndarray

    def map_change_points(self, change_points: Sequence[int], half: str = "even") -> tuple[int, ...]:
        """Number of rows of the half at or before each original change point."""
        shift = 0 if half == "even" else 1
        return tuple((int(c) + shift) // 2 for c in change_points)


def split_even_odd(data: RegressionDataset) -> SplitData:
    """Even (1-based) rows and odd rows; a trailing row is dropped when n is odd."""
    if data.n < 4:
        raise InputError("sample splitting needs n >= 4")
    n0 = data.n // 2
    odd_idx = np.arange(0, 2 * n0, 2)
    even_idx = odd_idx + 1
    half = lambda idx: RegressionDataset(data.X[idx], data.y[idx])
    return SplitData(half(even_idx), half(odd_idx), n0, even_idx, odd_idx)


@dataclass(frozen=True)
class DesparsifiedEstimate:
    delta_tilde: np.ndarray
    location_factor: float
    source: str = "no_split"


def desparsify(delta_hat, omega_hat, gram, gamma_diff, location_factor, source="no_split") -> DesparsifiedEstimate:
    """delta_hat - Omega (Sigma delta_hat - gamma_diff)."""
    delta_hat = np.asarray(delta_hat, dtype=np.float64)
    omega_hat = np.atleast_2d(np.asarray(omega_hat, dtype=np.float64))
    gram = np.atleast_2d(np.asarray(gram, dtype=np.float64))
    gamma_diff = np.asarray(gamma_diff, dtype=np.float64)
    p = delta_hat.shape[0]
    if omega_hat.shape != (p, p) or gram.shape != (p, p) or gamma_diff.shape != (p,):
        raise InputError("inconsistent shapes in desparsify")
    if not location_factor > 0:
        raise DomainError("location factor must be positive")
    tilde = delta_hat - omega_hat @ (gram @ delta_hat - gamma_diff)
    return DesparsifiedEstimate(tilde, float(location_factor), source)


def location_weights(a: int, theta: int, b: int) -> tuple[float, float]:
    if not a < theta < b:
        raise DomainError(f"need a < theta < b, got ({a}, {theta}, {b})")
    return -math.sqrt((b - theta) / (theta - a)), math.sqrt((theta - a) / (b - theta))


def _check_anchor(a, theta, b, n):
    if not 0 <= a < theta < b <= n:
        raise DomainError(f"need 0 <= a < theta < b <= n, got ({a}, {theta}, {b})")


def score_terms(data: RegressionDataset, a: int, theta: int, b: int, delta_hat) -> np.ndarray:
    """U_t = x_t (y_t + x_t' delta_hat / 2) up to theta and x_t (y_t - x_t' delta_hat / 2) after."""
    _check_anchor(a, theta, b, data.n)
    X, y = data.X[a:b], data.y[a:b]
    sign = np.where(np.arange(a + 1, b + 1) <= theta, 0.5, -0.5)
    return X * (y + sign * (X @ np.asarray(delta_hat, dtype=np.float64)))[:, None]


@dataclass(frozen=True)
class NoiseCovariance:
    gamma_hat: np.ndarray
    epsilon: float
    windows: tuple[tuple[int, int], tuple[int, int]]
    clipped: float  # magnitude of the most negative eigenvalue removed


def _cov(U: np.ndarray) -> np.ndarray:
    C = U - U.mean(axis=0)
    return C.T @ C / U.shape[0]


def clip_psd(M: np.ndarray) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """Symmetrise and clip eigenvalues at zero; returns (matrix, clip, evals, evecs)."""
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    clip = float(max(0.0, -w.min())) if w.size else 0.0
    w = np.clip(w, 0.0, None)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T), clip, w, V


def gamma_hat(data: RegressionDataset, a: int, theta: int, b: int, delta_hat, eps: float = 0.0) -> NoiseCovariance:
    """Average of the score covariances over (a, a + L] and (b - R, b].

    L = floor((1 - eps)(theta - a)) and R = floor((1 - eps)(b - theta)), so
    each window stays on its own side of theta.
    """
    if not 0.0 <= eps < 1.0:
        raise DomainError("eps must lie in [0, 1)")
    U = score_terms(data, a, theta, b, delta_hat)
    left = int(math.floor((1.0 - eps) * (theta - a)))
    right = int(math.floor((1.0 - eps) * (b - theta)))
    if min(left, right) < 2:
        raise DomainError("covariance window shorter than 2")
    G = 0.5 * (_cov(U[:left]) + _cov(U[U.shape[0] - right :]))
    G, clip, _, _ = clip_psd(G)
    return NoiseCovariance(G, float(eps), ((a, a + left), (b - right, b)), clip)


@dataclass(frozen=True)
class ConfidenceBand:
    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    half_width: float
    alpha: float
    method: str
    B: int
    quantile: float
    provenance: dict = field(default_factory=dict)

    @property
    def rejected_set(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero((self.lower >= 0) | (self.upper <= 0)))

    @property
    def p(self) -> int:
        return self.center.shape[0]


def _check_mc(alpha, B):
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if int(B) < 1:
        raise DomainError("B must be at least 1")


def _sup_draws(factor: np.ndarray, B: int, seed: int, stream: int, threads: int) -> np.ndarray:
    """|z @ factor|_inf for B standard normal rows z, generated in seeded blocks."""
    starts = range(0, B, BLOCK)

    def block(start):
        rng = np.random.default_rng(np.random.SeedSequence([seed, stream, start // BLOCK]))
        z = rng.standard_normal((min(BLOCK, B - start), factor.shape[0]))
        return np.max(np.abs(z @ factor), axis=1) if factor.shape[1] else np.zeros(z.shape[0])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    return np.concatenate(parts)


def mc_quantile(values: np.ndarray, alpha: float) -> float:
    """Empirical (1 - alpha) quantile: the ceil((1 - alpha) N)-th order statistic."""
    return float(np.quantile(values, 1.0 - alpha, method="inverted_cdf"))


def _band(center, C, factor, alpha, method, B, provenance):
    h = C / factor
    center = np.asarray(center, dtype=np.float64)
    return ConfidenceBand(center - h, center + h, center, float(h), float(alpha), method, int(B), float(C), provenance)


def gaussian_ci(
    delta_tilde, omega_hat, gamma, location_factor, alpha=0.1, B=DEFAULT_B, seed=0, threads=1, stream=0,
) -> ConfidenceBand:
    """Band from draws of Omega L z with L L' = Gamma."""
    _check_mc(alpha, B)
    G = gamma.gamma_hat if isinstance(gamma, NoiseCovariance) else np.atleast_2d(np.asarray(gamma, dtype=np.float64))
    omega_hat = np.atleast_2d(np.asarray(omega_hat, dtype=np.float64))
    w = np.linalg.eigvalsh(0.5 * (G + G.T))
    if w.size and w.min() < -PSD_TOL * max(float(np.trace(G)), 0.0):
        raise InfeasibleError("noise covariance is not positive semidefinite beyond tolerance")
    _, clip, w, V = clip_psd(G)
    L = V * np.sqrt(w)
    draws = _sup_draws((omega_hat @ L).T, int(B), seed, stream, threads)
    C = mc_quantile(draws, alpha)
    prov = {"quantile_source": "gaussian_limit", "seed": seed, "rng": RNG_NAME, "gamma_clip": clip}
    return _band(delta_tilde, C, location_factor, alpha, "gaussian_limit", B, prov)


def bootstrap_factor(data, a, theta, b, delta_hat, omega_hat) -> np.ndarray:
    """Rows (b - a)^{-1/2} w_t Omega (U_t - U_bar); W = zeta @ factor."""
    U = score_terms(data, a, theta, b, delta_hat)
    wl, wr = location_weights(a, theta, b)
    w = np.where(np.arange(a + 1, b + 1) <= theta, wl, wr)
    C = (U - U.mean(axis=0)) * w[:, None]
    return C @ np.atleast_2d(omega_hat).T / math.sqrt(b - a)


def bootstrap_ci(
    data, a, theta, b, delta_hat, delta_tilde, omega_hat, alpha=0.1, B=DEFAULT_B, seed=0, threads=1, stream=0,
) -> ConfidenceBand:
    """Multiplier bootstrap band; the quantile pools |W|_inf with |delta_tilde|_inf."""
    _check_mc(alpha, B)
    factor = bootstrap_factor(data, a, theta, b, delta_hat, omega_hat)
    draws = _sup_draws(factor, int(B), seed, stream, threads)
    pooled = np.append(draws, np.max(np.abs(delta_tilde)))
    C = mc_quantile(pooled, alpha)
    prov = {"quantile_source": "bootstrap+delta_tilde", "seed": seed, "rng": RNG_NAME}
    return _band(delta_tilde, C, location_factor(a, theta, b), alpha, "multiplier_bootstrap", B, prov)


@dataclass(frozen=True)
class _Plan:
    fit: RegressionDataset  # LOPE and CLIME
    plug: RegressionDataset  # correction, Gamma and bootstrap
    a: int
    theta: int
    b: int
    source: str


def _plans(data: RegressionDataset, cps: list[int], split: bool) -> list[_Plan]:
    if not split:
        bounds = [0, *cps, data.n]
        return [_Plan(data, data, bounds[j - 1], bounds[j], bounds[j + 1], "no_split") for j in range(1, len(bounds) - 1)]
    halves = split_even_odd(data)
    mapped = halves.map_change_points(cps, "even")
    anchors = anchor_intervals(mapped, halves.n0)
    return [_Plan(halves.even, halves.odd, an.a, an.theta_hat, an.b, "split") for an in anchors]


def _stage(name, j, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (InfeasibleError, DomainError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(f"change {j}: {name} failed: {exc}", stage=name, change_index=j) from exc
    except StageError as exc:
        raise StageError(f"change {j}: {name} failed: {exc}", stage=exc.stage or name, change_index=j) from exc


def infer_one(
    plan: _Plan, j: int, alpha, method, eps, B, seed, threads, lam="cv", eta="cv",
) -> ConfidenceBand:
    a, t, b = plan.a, plan.theta, plan.b
    if lam == "cv":
        lam = _stage("lope", j, cv_lambda, plan.fit, a, t, b, "lope")
    est = _stage("lope", j, lope, plan.fit, a, t, b, float(lam))
    seg = plan.fit.X[a:b]
    if eta == "cv":
        eta = _stage("clime", j, cv_eta, seg, threads=threads)
    gram_fit = seg.T @ seg / seg.shape[0]
    prec = _stage("clime", j, clime, gram_fit, b - a, float(eta), threads)
    gram, diff = local_stats(plan.plug.X[a:b], plan.plug.y[a:b], t - a)
    factor = location_factor(a, t, b)
    ds = desparsify(est.delta, prec.omega, gram, diff, factor, plan.source)
    if method in ("gauss", "gaussian", "gaussian_limit"):
        gam = _stage("gamma", j, gamma_hat, plan.plug, a, t, b, est.delta, eps)
        band = _stage("ci", j, gaussian_ci, ds.delta_tilde, prec.omega, gam, factor, alpha, B, seed, threads, j)
        extra = {"gamma_clip": gam.clipped, "gamma_windows": gam.windows}
    elif method in ("boot", "bootstrap", "multiplier_bootstrap"):
        band = _stage("ci", j, bootstrap_ci, plan.plug, a, t, b, est.delta, ds.delta_tilde, prec.omega, alpha, B, seed, threads, j)
        extra = {}
    else:
        raise InputError(f"unknown CI method {method!r}")
    prov = dict(band.provenance)
    prov.update(
        extra,
        change_index=j, theta_hat=t, a=a, b=b, source=plan.source, lam=float(lam), eta=float(eta),
        location_factor=factor, delta_hat=est.delta, lope_converged=est.converged,
        clime_slack=prec.feasibility_slack,
    )
    return ConfidenceBand(band.lower, band.upper, band.center, band.half_width, band.alpha, band.method, band.B, band.quantile, prov)


def infer_all(
    data: RegressionDataset,
    change_points: Sequence[int],
    alpha: float = 0.1,
    split: bool = False,
    method: str = "boot",
    eps: float = 0.0,
    B: int = DEFAULT_B,
    seed: int = 0,
    threads: int = 1,
    lam: float | str = "cv",
    eta: float | str = "cv",
) -> list[ConfidenceBand]:
    """Simultaneous bands for every differential parameter.

    Without splitting (the default) change j is analysed on
    (theta_{j-1}, theta_{j+1}] with all plug-ins from the full data.  With
    splitting, LOPE and CLIME use the even half and the correction, noise
    covariance and bootstrap use the odd half, both on the anchor intervals of
    the even-half change points.
    """
    _check_mc(alpha, B)
    cps = sorted(int(c) for c in change_points)
    if any(not 0 < c < data.n for c in cps) or len(set(cps)) != len(cps):
        raise DomainError("change points must be distinct and inside (0, n)")
    plans = _plans(data, cps, split)
    return [
        infer_one(plan, j, alpha, method.lower(), eps, B, seed, threads, lam, eta)
        for j, plan in enumerate(plans, start=1)
    ]

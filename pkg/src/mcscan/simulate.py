"""Scenario generators and evaluation metrics for simulation studies.

Scenarios
---------
M1  isotropic Gaussian design, beta_0 = -beta_1 = rho * delta with delta drawn
    uniformly on the unit sphere of a uniformly chosen support of size s.
M2  Toeplitz design Sigma_ij = gamma^|i-j|, delta with s entries in {+1, -1},
    beta_{0,1} = mu -/+ delta / 2 where mu = nu * N(0, I) / sqrt(p).
M3  three changes at j n / 4, beta_0 = 0.4 * (+1, -1, +1, -1, 0, ...),
    beta_j = (-1)^j beta_0.

All randomness flows through one ``numpy.random.Generator`` (PCG64) per
dataset, so a seed fully determines the output.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import RegressionDataset

RNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class Truth:
    change_points: tuple[int, ...]
    betas: np.ndarray = field(repr=False)  # (q + 1, p)
    sigma: np.ndarray | None = field(default=None, repr=False)

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.betas, axis=0)


@dataclass
class ScenarioConfig:
    scenario: str = "M1"
    n: int = 300
    p: int = 200
    change_points: tuple[int, ...] = (75,)
    rho: float = 2.0
    sparsity: int = 5
    gamma: float = 0.6
    nu: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.scenario = self.scenario.upper()
        if self.scenario not in ("M1", "M2", "M3"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        self.change_points = tuple(int(c) for c in self.change_points)
        if self.scenario == "M3":
            if self.n % 4:
                raise ValueError("M3 needs n divisible by 4")
            self.change_points = tuple(j * self.n // 4 for j in (1, 2, 3))
        elif len(self.change_points) != 1:
            raise ValueError(f"{self.scenario} has exactly one change point")
        if self.sparsity > self.p:
            raise ValueError("sparsity exceeds p")
        if not abs(self.gamma) < 1:
            raise ValueError("need |gamma| < 1")

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        kw = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "scenario":
                kw[key] = value
            elif key == "change_points":
                kw[key] = tuple(int(v) for v in value.replace(",", " ").split())
            elif key in ("n", "p", "sparsity", "seed"):
                kw[key] = int(value)
            elif key in ("rho", "gamma", "nu"):
                kw[key] = float(value)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kw)

    def to_text(self) -> str:
        out = []
        for key, value in asdict(self).items():
            if key == "change_points":
                value = ",".join(str(c) for c in value)
            out.append(f"{key} = {value}")
        return "\n".join(out) + "\n"


def toeplitz_cov(p: int, gamma: float) -> np.ndarray:
    idx = np.arange(p)
    return gamma ** np.abs(idx[:, None] - idx[None, :])


def sym_sqrt(sigma: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(sigma)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def piecewise_regression(
    n: int,
    change_points: Sequence[int],
    betas: np.ndarray,
    rng: np.random.Generator,
    sigma: np.ndarray | None = None,
    noise_sd: float = 1.0,
) -> RegressionDataset:
    """y_t = x_t' beta_j + eps_t on segment j, x_t ~ N(0, sigma), eps_t ~ N(0, noise_sd^2)."""
    p = betas.shape[1]
    X = rng.standard_normal((n, p))
    if sigma is not None:
        X = X @ sym_sqrt(sigma)
    eps = noise_sd * rng.standard_normal(n)
    bounds = [0, *change_points, n]
    y = np.empty(n)
    for j in range(len(bounds) - 1):
        s, e = bounds[j], bounds[j + 1]
        y[s:e] = X[s:e] @ betas[j]
    return RegressionDataset(X, y + eps)


def gen_m1(n=300, p=200, rho=2.0, sparsity=5, theta=75, seed=0):
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(p, size=sparsity, replace=False))
    v = rng.standard_normal(sparsity)
    delta = np.zeros(p)
    delta[support] = v / np.linalg.norm(v)
    betas = np.vstack([rho * delta, -rho * delta])
    data = piecewise_regression(n, (theta,), betas, rng)
    return data, Truth((theta,), betas, np.eye(p))


def gen_m2(n=300, p=200, gamma=0.6, nu=1.0, sparsity=5, theta=75, seed=0):
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(p, size=sparsity, replace=False))
    delta = np.zeros(p)
    delta[support] = rng.choice([-1.0, 1.0], size=sparsity)
    mu = nu * rng.standard_normal(p) / math.sqrt(p)
    betas = np.vstack([mu - delta / 2, mu + delta / 2])
    sigma = toeplitz_cov(p, gamma)
    data = piecewise_regression(n, (theta,), betas, rng, sigma)
    return data, Truth((theta,), betas, sigma)


def gen_m3(n=800, p=900, seed=0):
    if n % 4:
        raise ValueError("M3 needs n divisible by 4")
    rng = np.random.default_rng(seed)
    beta0 = np.zeros(p)
    head = min(4, p)
    beta0[:head] = 0.4 * (-1.0) ** np.arange(head)
    betas = np.vstack([(-1.0) ** j * beta0 for j in range(4)])
    cps = tuple(j * n // 4 for j in (1, 2, 3))
    data = piecewise_regression(n, cps, betas, rng)
    return data, Truth(cps, betas, np.eye(p))


def generate_scenario(config: ScenarioConfig, seed=None):
    seed = config.seed if seed is None else seed
    if config.scenario == "M1":
        return gen_m1(config.n, config.p, config.rho, config.sparsity, config.change_points[0], seed)
    if config.scenario == "M2":
        return gen_m2(
            config.n, config.p, config.gamma, config.nu, config.sparsity,
            config.change_points[0], seed,
        )
    return gen_m3(config.n, config.p, seed)


def repetition_seeds(seed: int, reps: int) -> list[np.random.SeedSequence]:
    """Independent per-repetition seeds; repetition r never depends on reps."""
    return [np.random.SeedSequence([seed, r]) for r in range(reps)]


# ---------------------------------------------------------------- metrics


@dataclass
class EvalReport:
    q_hat: int | None = None
    errors: list[int] | None = None
    hausdorff: float | None = None
    v_measure: float | None = None
    coverage: float | None = None
    proportion: float | None = None
    tpr: float | None = None
    fdr: float | None = None
    half_widths: list[float] | None = None
    runtime: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def localisation_errors(estimated, truth) -> list[int]:
    """|theta_hat - theta| for each estimate against its nearest true change."""
    truth = np.asarray(sorted(truth), dtype=np.int64)
    if truth.size == 0:
        return []
    return [int(np.min(np.abs(truth - t))) for t in sorted(estimated)]


def hausdorff(estimated, truth, n: int) -> float:
    """Hausdorff distance of the scaled sets, both augmented with {0, 1}."""
    A = np.r_[0.0, np.asarray(estimated, dtype=float) / n, 1.0]
    B = np.r_[0.0, np.asarray(truth, dtype=float) / n, 1.0]
    D = np.abs(A[:, None] - B[None, :])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def segment_labels(change_points, n: int) -> np.ndarray:
    return np.searchsorted(np.sort(np.asarray(change_points, dtype=np.int64)), np.arange(1, n + 1), side="left")


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def v_measure(labels_true, labels_pred) -> float:
    """Harmonic mean of homogeneity and completeness (beta = 1)."""
    _, ti = np.unique(labels_true, return_inverse=True)
    _, pi = np.unique(labels_pred, return_inverse=True)
    C = np.zeros((ti.max() + 1, pi.max() + 1))
    np.add.at(C, (ti, pi), 1.0)
    N = C.sum()
    h_true, h_pred = _entropy(C.sum(axis=1)), _entropy(C.sum(axis=0))
    nz = C > 0
    joint = -(C[nz] / N * np.log(C[nz] / N)).sum()
    h_true_given_pred = joint - h_pred
    h_pred_given_true = joint - h_true
    homogeneity = 1.0 if h_true == 0 else 1.0 - h_true_given_pred / h_true
    completeness = 1.0 if h_pred == 0 else 1.0 - h_pred_given_true / h_pred
    if homogeneity + completeness == 0:
        return 0.0
    return float(2 * homogeneity * completeness / (homogeneity + completeness))


def evaluate_detection(estimated, truth, n: int) -> EvalReport:
    estimated = sorted(int(c) for c in estimated)
    truth = sorted(int(c) for c in truth)
    return EvalReport(
        q_hat=len(estimated),
        errors=localisation_errors(estimated, truth),
        hausdorff=hausdorff(estimated, truth, n),
        v_measure=v_measure(segment_labels(truth, n), segment_labels(estimated, n)),
    )


def evaluate_inference(bands, delta_truth) -> EvalReport:
    """Coverage, Proportion, TPR and FDR of simultaneous bands.

    ``bands`` is one band (anything with ``lower``/``upper``) or a sequence of
    them matched to the rows of ``delta_truth``; metrics are averaged over
    bands when several are given.
    """
    if hasattr(bands, "lower"):
        bands = [bands]
    delta_truth = np.atleast_2d(np.asarray(delta_truth, dtype=float))
    if len(bands) != delta_truth.shape[0]:
        raise ValueError("need one band per true differential parameter")
    rows = []
    for band, delta in zip(bands, delta_truth):
        lower, upper = np.asarray(band.lower), np.asarray(band.upper)
        cover = (lower < delta) & (delta < upper)
        reject = (lower > 0) | (upper < 0)
        support = delta != 0
        tpr = reject[support].mean() if support.any() else math.nan
        fdr = reject[~support].sum() / max(reject.sum(), 1)
        rows.append((float(cover.all()), cover.mean(), tpr, fdr, float(np.mean(upper - lower) / 2)))
    m = np.array(rows, dtype=float)
    return EvalReport(
        coverage=float(m[:, 0].mean()),
        proportion=float(m[:, 1].mean()),
        tpr=float(np.nanmean(m[:, 2])) if not np.all(np.isnan(m[:, 2])) else math.nan,
        fdr=float(m[:, 3].mean()),
        half_widths=[float(h) for h in m[:, 4]],
    )


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False

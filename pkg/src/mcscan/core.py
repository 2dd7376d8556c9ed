"""Data container and O(p) interval statistics built on partial sums.

All intervals are half-open ``(a, b]`` in the 1-based time convention, which
maps to the 0-based row slice ``X[a:b]``.  Index arguments are therefore the
same integers in both conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError

MAD_CONSTANT = 1.4826


@dataclass(frozen=True)
class RegressionDataset:
    """Regressors ``X`` (n x p) and response ``y`` (n,), rows in time order."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1:
            raise InputError("X must be 2-d and y 1-d")
        if X.shape[0] != y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 2 or X.shape[1] < 1:
            raise InputError("need n >= 2 observations and p >= 1 regressors")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("data contain non-finite entries")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def rows(self, start: int, stop: int) -> "RegressionDataset":
        """Sub-dataset of 0-based rows ``start:stop``, i.e. times (start, stop]."""
        return RegressionDataset(self.X[start:stop], self.y[start:stop])


@dataclass(frozen=True)
class CrossProductSums:
    """Cumulative sums ``S[t] = sum_{u <= t} x_u y_u`` with ``S[0] = 0``."""

    S: np.ndarray

    @property
    def n(self) -> int:
        return self.S.shape[0] - 1

    @property
    def p(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class IntervalMean:
    gamma_hat: np.ndarray
    a: int
    b: int


@dataclass(frozen=True)
class IntervalGram:
    sigma_hat: np.ndarray
    s: int
    e: int

    @property
    def length(self) -> int:
        return self.e - self.s


def _check_bounds(lo: int, hi: int, n: int) -> None:
    if not (0 <= lo < hi <= n):
        raise DomainError(f"need 0 <= {lo} < {hi} <= {n}")


def build_cross_sums(data: RegressionDataset) -> CrossProductSums:
    if not isinstance(data, RegressionDataset):
        data = RegressionDataset(*data)
    S = np.zeros((data.n + 1, data.p))
    np.cumsum(data.X * data.y[:, None], axis=0, out=S[1:])
    S.setflags(write=False)
    return CrossProductSums(S)


def interval_mean(sums: CrossProductSums, a: int, b: int) -> IntervalMean:
    _check_bounds(a, b, sums.n)
    return IntervalMean((sums.S[b] - sums.S[a]) / (b - a), a, b)


def interval_gram(data: RegressionDataset, s: int, e: int) -> IntervalGram:
    _check_bounds(s, e, data.n)
    Xs = data.X[s:e]
    return IntervalGram(Xs.T @ Xs / (e - s), s, e)


def mad_scales(data: RegressionDataset) -> np.ndarray:
    """Robust per-coordinate scale of the product series ``x_it y_t``.

    MAD of the lag-one differences divided by sqrt(2), times the Gaussian
    consistency constant.  Zero-MAD coordinates get scale 1.
    """
    z = data.X * data.y[:, None]
    d = np.diff(z, axis=0) / np.sqrt(2.0)
    med = np.median(d, axis=0)
    scales = MAD_CONSTANT * np.median(np.abs(d - med), axis=0)
    scales[~(scales > 0)] = 1.0
    return scales


def mad_standardize(data: RegressionDataset) -> tuple[RegressionDataset, np.ndarray]:
    """Divide column i of X by the MAD scale of ``x_it y_t``; return the scales too."""
    scales = mad_scales(data)
    return RegressionDataset(data.X / scales, data.y), scales

"""Deterministic multiscale (seeded) interval system.

Level ``k`` uses the scale ``r_k = n / 2**k`` and contributes the intervals
``(floor((i-1) r_k), ceil((i+1) r_k)]`` for ``i = 1, ..., 2**k - 1``; levels
run from 1 to ``ceil(log2 n)``.  Bounds are computed in exact integer
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class SeededInterval:
    a: int
    b: int
    level: int

    @property
    def length(self) -> int:
        return self.b - self.a

    def contains(self, t: int) -> bool:
        return self.a < t <= self.b


@dataclass(frozen=True)
class IntervalSet:
    """Deduplicated intervals sorted by (length, a); stored column-wise."""

    n: int
    a: np.ndarray
    b: np.ndarray
    level: np.ndarray

    def __len__(self) -> int:
        return self.a.shape[0]

    def __iter__(self) -> Iterator[SeededInterval]:
        for a, b, k in zip(self.a.tolist(), self.b.tolist(), self.level.tolist()):
            yield SeededInterval(a, b, k)

    def __getitem__(self, i: int) -> SeededInterval:
        return SeededInterval(int(self.a[i]), int(self.b[i]), int(self.level[i]))

    def as_tuples(self) -> list[tuple[int, int]]:
        return list(zip(self.a.tolist(), self.b.tolist()))

    @property
    def lengths(self) -> np.ndarray:
        return self.b - self.a


def num_levels(n: int) -> int:
    """ceil(log2 n) for n >= 1."""
    return (n - 1).bit_length()


def generate(n: int) -> IntervalSet:
    if n < 1:
        raise ValueError("n must be positive")
    a_parts, b_parts, k_parts = [], [], []
    for k in range(1, num_levels(n) + 1):
        m = 1 << k
        i = np.arange(1, m, dtype=np.int64)
        a_parts.append(((i - 1) * n) // m)
        b_parts.append(np.minimum(-((-(i + 1) * n) // m), n))
        k_parts.append(np.full(m - 1, k, dtype=np.int64))
    if not a_parts:
        empty = np.zeros(0, dtype=np.int64)
        return IntervalSet(n, empty, empty.copy(), empty.copy())
    a = np.concatenate(a_parts)
    b = np.concatenate(b_parts)
    level = np.concatenate(k_parts)
    # first occurrence wins, so a collision keeps the coarsest level
    _, first = np.unique(a * (n + 1) + b, return_index=True)
    a, b, level = a[first], b[first], level[first]
    order = np.lexsort((a, b - a))
    return IntervalSet(n, a[order], b[order], level[order])

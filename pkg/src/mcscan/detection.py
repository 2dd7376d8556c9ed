"""Multiscale covariance scanning (McScan) for multiple change points.

The detector on an interval (s, e] at split k is

    T_{s,k,e} = sqrt((k - s)(e - k) / (e - s)) * |g_{k,e} - g_{s,k}|_inf,

with g_{a,b} the mean of x_t y_t over (a, b].  Every seeded interval is scanned
once (O(p) per split via partial sums); change points are then selected by the
narrowest-over-threshold (NOT) rule.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import (
    CrossProductSums,
    RegressionDataset,
    build_cross_sums,
    mad_standardize,
)
from .errors import DomainError
from .intervals import IntervalSet, SeededInterval, generate

DEFAULT_C_PI = 1.9


@dataclass(frozen=True)
class DetectorPeak:
    interval: SeededInterval
    k_star: int
    t_star: float
    argmax_coord: int


@dataclass(frozen=True)
class ThresholdPolicy:
    """How the NOT threshold is chosen.

    kind is ``"fixed"`` (``value`` is the threshold itself), ``"default"``
    (``value`` is c_pi in c_pi * sqrt(log(np))) or ``"automatic"`` (elbow of
    the solution path).  ``trim=None`` means 2 log(np).
    """

    kind: str = "default"
    value: float = DEFAULT_C_PI
    trim: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "default", "automatic"):
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if self.value < 0 or (self.trim is not None and self.trim < 0):
            raise ValueError("threshold and trimming must be nonnegative")

    @classmethod
    def fixed(cls, pi: float, trim: float | None = None) -> "ThresholdPolicy":
        return cls("fixed", float(pi), trim)

    @classmethod
    def automatic(cls, trim: float | None = None) -> "ThresholdPolicy":
        return cls("automatic", 0.0, trim)


@dataclass(frozen=True)
class SegmentationResult:
    change_points: tuple[int, ...]
    peaks: tuple[DetectorPeak, ...]
    threshold_used: float
    trim: float
    standardized: bool
    scales: np.ndarray | None = field(default=None, repr=False)
    mode: str = "not"


@dataclass(frozen=True)
class PathEntry:
    threshold_low: float
    threshold_high: float
    change_points: tuple[int, ...]
    score: float
    peaks: tuple[DetectorPeak, ...] = field(repr=False)

    @property
    def num_cps(self) -> int:
        return len(self.change_points)


@dataclass(frozen=True)
class SolutionPath:
    entries: tuple[PathEntry, ...]
    trim: float
    standardized: bool
    scales: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PeakTable:
    """Per-interval argmax and peak value, rows in NOT priority order.

    Priority: shorter interval first, then larger peak, then smaller left end.
    Intervals too short to scan after trimming are absent.
    """

    n: int
    trim: float
    a: np.ndarray
    b: np.ndarray
    k: np.ndarray
    T: np.ndarray
    coord: np.ndarray
    level: np.ndarray

    def __len__(self) -> int:
        return self.a.shape[0]

    def peak(self, i: int) -> DetectorPeak:
        iv = SeededInterval(int(self.a[i]), int(self.b[i]), int(self.level[i]))
        return DetectorPeak(iv, int(self.k[i]), float(self.T[i]), int(self.coord[i]))


def default_threshold(n: int, p: int, c_pi: float = DEFAULT_C_PI) -> float:
    if n * p < 2:
        raise ValueError("need n * p >= 2")
    return c_pi * math.sqrt(math.log(n * p))


def default_trimming(n: int, p: int) -> float:
    return 2.0 * math.log(n * p)


def detector(sums: CrossProductSums, s: int, k: int, e: int) -> float:
    if not (0 <= s < k < e <= sums.n):
        raise DomainError(f"need 0 <= s < k < e <= n, got ({s}, {k}, {e})")
    S = sums.S
    diff = (S[e] - S[k]) / (e - k) - (S[k] - S[s]) / (k - s)
    return math.sqrt((k - s) * (e - k) / (e - s)) * float(np.max(np.abs(diff)))


def _scan(S: np.ndarray, a: int, b: int, w: int):
    """Peak of T_{a,k,b} over k in {a+w+1, ..., b-w-1}; None if empty."""
    if b - a <= 2 * w + 1:
        return None
    ks = np.arange(a + w + 1, b - w)
    Sk = S[ks]
    left = (Sk - S[a]) / (ks - a)[:, None]
    right = (S[b] - Sk) / (b - ks)[:, None]
    absdiff = np.abs(right - left)
    coord = np.argmax(absdiff, axis=1)
    sup = absdiff[np.arange(ks.size), coord]
    T = np.sqrt((ks - a) * (b - ks) / (b - a)) * sup
    j = int(np.argmax(T))
    return int(ks[j]), float(T[j]), int(coord[j])


def scan_interval(
    sums: CrossProductSums, interval: SeededInterval, trim: float
) -> DetectorPeak | None:
    """Peak over the trimmed split range; ties go to the smallest k."""
    res = _scan(sums.S, interval.a, interval.b, int(math.floor(trim)))
    if res is None:
        return None
    return DetectorPeak(interval, *res)


def scan_intervals(
    sums: CrossProductSums,
    intervals: IntervalSet,
    trim: float,
    threads: int = 1,
) -> PeakTable:
    w = int(math.floor(trim))
    keep = np.flatnonzero(intervals.lengths > 2 * w + 1)
    a_all, b_all = intervals.a[keep], intervals.b[keep]

    def work(idx):
        return [_scan(sums.S, int(a_all[i]), int(b_all[i]), w) for i in idx]

    chunks = np.array_split(np.arange(keep.size), max(1, threads))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    res = [r for part in parts for r in part]

    k = np.array([r[0] for r in res], dtype=np.int64)
    T = np.array([r[1] for r in res], dtype=np.float64)
    coord = np.array([r[2] for r in res], dtype=np.int64)
    a, b, level = a_all, b_all, intervals.level[keep]
    order = np.lexsort((a, -T, b - a))
    return PeakTable(
        intervals.n, trim, a[order], b[order], k[order], T[order], coord[order], level[order]
    )


@njit(cache=True)
def _not_select(a, b, k, T, pi, out):
    # rows are already in priority order: selection is a single pass
    q = 0
    for i in range(a.shape[0]):
        if not T[i] > pi:
            continue
        pierced = False
        for j in range(q):
            th = k[out[j]]
            if a[i] < th and th <= b[i]:
                pierced = True
                break
        if not pierced:
            out[q] = i
            q += 1
    return q


def not_select(table: PeakTable, pi: float) -> list[int]:
    """Row indices selected by NOT at threshold pi, in selection order."""
    out = np.empty(max(len(table), 1), dtype=np.int64)
    q = _not_select(table.a, table.b, table.k, table.T, float(pi), out)
    return out[:q].tolist()


def unpierced_max(table: PeakTable, change_points) -> float:
    """Largest peak over intervals (a, b] holding none of the change points."""
    if len(table) == 0:
        return 0.0
    cps = np.sort(np.asarray(change_points, dtype=np.int64))
    if cps.size == 0:
        return float(table.T.max())
    j = np.searchsorted(cps, table.a, side="right")
    hit = (j < cps.size) & (cps[np.minimum(j, cps.size - 1)] <= table.b)
    free = table.T[~hit]
    return float(free.max()) if free.size else 0.0


def _prepare(data: RegressionDataset, standardize: bool):
    scales = None
    if standardize:
        data, scales = mad_standardize(data)
    return data, build_cross_sums(data), scales


def peak_table(
    data: RegressionDataset,
    trim: float | None = None,
    standardize: bool = False,
    threads: int = 1,
) -> tuple[PeakTable, np.ndarray | None]:
    data, sums, scales = _prepare(data, standardize)
    if trim is None:
        trim = default_trimming(data.n, data.p)
    return scan_intervals(sums, generate(data.n), trim, threads), scales


def _result_from_rows(table, rows, pi, standardize, scales, mode="not"):
    peaks = sorted((table.peak(i) for i in rows), key=lambda pk: pk.k_star)
    return SegmentationResult(
        tuple(pk.k_star for pk in peaks),
        tuple(peaks),
        float(pi),
        table.trim,
        standardize,
        scales,
        mode,
    )


def detect(
    data: RegressionDataset,
    policy: ThresholdPolicy | None = None,
    standardize: bool = False,
    threads: int = 1,
    single_change: bool = False,
) -> SegmentationResult:
    """Run McScan; ``single_change=True`` scans (0, n] only and returns its argmax."""
    policy = policy or ThresholdPolicy()
    if single_change:
        return detect_single(data, policy.trim, standardize)
    if policy.kind == "automatic":
        return auto_select(solution_path(data, policy.trim, standardize, threads))
    table, scales = peak_table(data, policy.trim, standardize, threads)
    if policy.kind == "fixed":
        pi = policy.value
    else:
        pi = default_threshold(data.n, data.p, policy.value)
    return _result_from_rows(table, not_select(table, pi), pi, standardize, scales)


def detect_single(
    data: RegressionDataset, trim: float | None = None, standardize: bool = False
) -> SegmentationResult:
    data, sums, scales = _prepare(data, standardize)
    if trim is None:
        trim = default_trimming(data.n, data.p)
    peak = scan_interval(sums, SeededInterval(0, data.n, 0), trim)
    peaks = () if peak is None else (peak,)
    return SegmentationResult(
        tuple(pk.k_star for pk in peaks), peaks, 0.0, trim, standardize, scales, "single"
    )


def solution_path(
    data: RegressionDataset,
    trim: float | None = None,
    standardize: bool = False,
    threads: int = 1,
) -> SolutionPath:
    table, scales = peak_table(data, trim, standardize, threads)
    return path_from_table(table, standardize, scales)


def path_from_table(table: PeakTable, standardize: bool = False, scales=None) -> SolutionPath:
    levels = np.unique(table.T[table.T > 0])[::-1]
    t_max = float(levels[0]) if levels.size else 0.0
    entries: list[PathEntry] = [PathEntry(t_max, math.inf, (), t_max, ())]
    seen = {(): 0}
    out = np.empty(max(len(table), 1), dtype=np.int64)
    for j, v in enumerate(levels):
        lo = float(levels[j + 1]) if j + 1 < levels.size else 0.0
        pi = np.nextafter(v, -np.inf)
        q = _not_select(table.a, table.b, table.k, table.T, pi, out)
        rows = out[:q].tolist()
        cps = tuple(sorted(int(table.k[i]) for i in rows))
        if cps in seen:
            last = entries[-1]
            if last.change_points == cps:
                entries[-1] = PathEntry(lo, last.threshold_high, cps, last.score, last.peaks)
            continue
        seen[cps] = len(entries)
        peaks = tuple(sorted((table.peak(i) for i in rows), key=lambda pk: pk.k_star))
        entries.append(PathEntry(lo, float(v), cps, unpierced_max(table, cps), peaks))
    entries.sort(key=lambda en: en.num_cps)  # stable: ties keep decreasing threshold
    return SolutionPath(tuple(entries), table.trim, standardize, scales)


def elbow_index(scores) -> int:
    """First i >= 1 where the averaged slope shrinks in absolute value.

    Interior points average the two adjacent segment slopes; the endpoints use
    their single segment.  Falls back to the last index.
    """
    g = np.asarray(scores, dtype=np.float64)
    m = g.size
    if m <= 1:
        return 0
    s = np.empty(m)
    s[0] = g[1] - g[0]
    s[-1] = g[-1] - g[-2]
    if m > 2:
        s[1:-1] = (g[2:] - g[:-2]) / 2.0
    for i in range(1, m):
        if abs(s[i]) < abs(s[i - 1]):
            return i
    return m - 1


def collapse_by_count(path: SolutionPath) -> list[PathEntry]:
    """One entry per number of change points, the one with the smallest score."""
    best: dict[int, PathEntry] = {}
    for en in path.entries:
        cur = best.get(en.num_cps)
        if cur is None or en.score < cur.score:
            best[en.num_cps] = en
    return [best[c] for c in sorted(best)]


def auto_select(path: SolutionPath) -> SegmentationResult:
    if not path.entries:
        raise ValueError("empty solution path")
    collapsed = collapse_by_count(path)
    chosen = collapsed[elbow_index([en.score for en in collapsed])]
    return SegmentationResult(
        chosen.change_points,
        chosen.peaks,
        chosen.threshold_low,
        path.trim,
        path.standardized,
        path.scales,
        "automatic",
    )

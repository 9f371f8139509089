"""Jenks natural breaks by exact dynamic programming.

Cuts are only placed between distinct values, so equal values always share a
class and breakpoints are strictly ascending.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BREAKS = (0.39, 0.66, 0.95)
LEVEL_NAMES = {1: "low", 2: "medium", 3: "high"}

# relative tolerance for treating two SDCM values as tied
TIE_RTOL = 1e-9


class JenksError(ValueError):
    pass


@dataclass(frozen=True)
class BreaksResult:
    breakpoints: tuple[float, ...]     # inclusive upper bound of each class; last = max(values)
    classes: np.ndarray                # 1-based class of each input value, input order
    sdcm: float
    sdam: float

    @property
    def gvf(self) -> float:
        return 1.0 if self.sdam == 0 else 1.0 - self.sdcm / self.sdam

    @property
    def counts(self) -> list[int]:
        return [int((self.classes == c).sum()) for c in range(1, len(self.breakpoints) + 1)]

    def to_dict(self) -> dict:
        return {"breakpoints": [float(b) for b in self.breakpoints], "gvf": float(self.gvf),
                "sdcm": float(self.sdcm), "sdam": float(self.sdam), "counts": self.counts}


def _ssd_table(u: np.ndarray, w: np.ndarray):
    """ssd(i, j) over distinct values u[i..j] with multiplicities w, via prefix sums."""
    u = u - np.average(u, weights=w)
    cw = np.r_[0.0, np.cumsum(w)]
    cs = np.r_[0.0, np.cumsum(w * u)]
    cq = np.r_[0.0, np.cumsum(w * u * u)]

    def ssd(i, j):
        n = cw[j + 1] - cw[i]
        s = cs[j + 1] - cs[i]
        return max(cq[j + 1] - cq[i] - s * s / n, 0.0)

    return ssd


def jenks_breaks(values, k: int) -> BreaksResult:
    """Partition ``values`` into ``k`` contiguous classes minimizing the within-class sum of squares.

    Among (numerically) tied optima the partition with the smallest first
    breakpoint wins, then the smallest second, and so on.
    """
    x = np.asarray(values, float).ravel()
    if x.size == 0:
        raise JenksError("values must be non-empty")
    if not np.all(np.isfinite(x)):
        raise JenksError("values must be finite")
    u, w = np.unique(x, return_counts=True)
    m = len(u)
    if not 1 <= k <= m:
        raise JenksError(f"k={k} must lie between 1 and the number of distinct values ({m})")
    w = w.astype(float)
    ssd = _ssd_table(u, w)
    sdam = float(((x - x.mean()) ** 2).sum())
    tol = TIE_RTOL * max(sdam, 1e-300)

    # suf[c][i]: minimal SSD of splitting u[i:] into c classes
    inf = np.inf
    suf = np.full((k + 1, m + 1), inf)
    suf[0][m] = 0.0
    for i in range(m):
        suf[1][i] = ssd(i, m - 1)
    for c in range(2, k + 1):
        for i in range(m - c, -1, -1):
            best = inf
            for j in range(i, m - c + 1):
                v = ssd(i, j) + suf[c - 1][j + 1]
                if v < best:
                    best = v
            suf[c][i] = best

    # walk left to right taking the earliest cut that stays within tolerance of the optimum
    cuts = []
    i = 0
    for c in range(k, 1, -1):
        target = suf[c][i]
        for j in range(i, m - c + 1):
            if ssd(i, j) + suf[c - 1][j + 1] <= target + tol:
                cuts.append(j)
                i = j + 1
                break
    cuts.append(m - 1)
    breakpoints = tuple(float(u[j]) for j in cuts)
    classes = np.searchsorted(np.array(breakpoints), x, side="left") + 1
    sdcm = 0.0
    lo = 0
    for j in cuts:
        sdcm += ssd(lo, j)
        lo = j + 1
    return BreaksResult(breakpoints, classes, float(sdcm), sdam)


def classify_value(value: float, breakpoints) -> int:
    """Smallest 1-based category whose inclusive upper bound is >= value; clamps to the top."""
    b = np.asarray(breakpoints, float)
    if b.size == 0:
        raise JenksError("need at least one breakpoint")
    if np.any(np.diff(b) <= 0):
        raise JenksError("breakpoints must be strictly ascending")
    return int(min(np.searchsorted(b, value, side="left") + 1, len(b)))


def classify_values(values, breakpoints) -> np.ndarray:
    b = np.asarray(breakpoints, float)
    if np.any(np.diff(b) <= 0):
        raise JenksError("breakpoints must be strictly ascending")
    return np.minimum(np.searchsorted(b, np.asarray(values, float), side="left") + 1, len(b))

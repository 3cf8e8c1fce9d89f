"""Per-cell summaries and Mann-Whitney U significance tests."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import mannwhitneyu, rankdata

# Pooled sizes up to this use the exact permutation distribution; float64
# counts stay exact below 2**53, and C(50, 25) is about 1.3e14.
EXACT_MAX_N = 50


@dataclass(frozen=True)
class SummaryCell:
    mean: float
    sd: float  # sample SD (n - 1); nan when n < 2
    n: int


def _value(record, metric: str) -> float:
    value = getattr(record, metric)
    return float(value)


def summarize(
    records: Iterable,
    metric: str,
    by: Sequence[str] = ("approach", "situation"),
    success_only: bool = False,
) -> dict[tuple, SummaryCell]:
    """Mean and sample SD of ``metric`` per group. Empty groups are simply absent.

    For ``metric == "success"`` the mean is the completion rate.
    """
    groups: dict[tuple, list[float]] = {}
    for r in records:
        if success_only and not r.success:
            continue
        groups.setdefault(tuple(getattr(r, k) for k in by), []).append(_value(r, metric))
    out = {}
    for key, values in groups.items():
        sd = statistics.stdev(values) if len(values) >= 2 else math.nan
        out[key] = SummaryCell(statistics.fmean(values), sd, len(values))
    return out


def _exact_two_sided(x: Sequence[float], y: Sequence[float]) -> float:
    """Exact two-sided p from the permutation distribution of the rank sum, ties included."""
    pooled = np.concatenate([x, y])
    doubled = np.rint(2 * rankdata(pooled)).astype(int)  # midranks are multiples of 1/2
    n1, n = len(x), len(pooled)
    top = int(doubled.sum())
    # counts[k, s]: number of k-subsets of the pooled sample whose doubled rank sum is s
    counts = np.zeros((n1 + 1, top + 1))
    counts[0, 0] = 1.0
    for r in doubled:
        counts[1:, r:] = counts[1:, r:] + counts[:-1, : top + 1 - r]
    dist = counts[n1]
    centre = n1 * (n + 1)  # doubled expected rank sum of the first sample
    observed = abs(int(doubled[:n1].sum()) - centre)
    sums = np.arange(top + 1)
    p = dist[np.abs(sums - centre) >= observed].sum() / dist.sum()
    return float(min(1.0, p))


def mann_whitney_p(x: Sequence[float], y: Sequence[float]) -> float:
    """Two-sided Mann-Whitney U p-value.

    Exact for small samples; normal approximation with tie correction beyond
    ``EXACT_MAX_N`` pooled observations.
    """
    if len(x) == 0 or len(y) == 0:
        raise ValueError("both samples must be non-empty")
    if len(set(x) | set(y)) == 1:
        return 1.0
    if len(x) + len(y) <= EXACT_MAX_N:
        return _exact_two_sided(x, y)
    return float(mannwhitneyu(x, y, alternative="two-sided", method="asymptotic").pvalue)


def significance(
    records: Iterable,
    cell_a: tuple,
    cell_b: tuple,
    metric: str,
    by: Sequence[str] = ("approach", "situation"),
) -> Optional[float]:
    """p-value comparing two cells, or None when either has fewer than two records."""
    a, b = [], []
    for r in records:
        key = tuple(getattr(r, k) for k in by)
        if key == tuple(cell_a):
            a.append(_value(r, metric))
        elif key == tuple(cell_b):
            b.append(_value(r, metric))
    if len(a) < 2 or len(b) < 2:
        return None
    return mann_whitney_p(a, b)


def stars(p: Optional[float]) -> str:
    if p is None:
        return "n/a"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""

"""Nonparametric comparisons: Wilcoxon signed-rank, Friedman, Bonferroni-Dunn."""

from __future__ import annotations

import math
from statistics import NormalDist
from typing import NamedTuple

import numpy as np
from scipy.stats import chi2, rankdata

from .exceptions import ContractError

EXACT_MAX_N = 25


class WilcoxonResult(NamedTuple):
    statistic: float
    pvalue: float
    n: int


class FriedmanResult(NamedTuple):
    statistic: float
    pvalue: float
    mean_ranks: np.ndarray
    rejected: bool


class BonferroniDunnResult(NamedTuple):
    cd: float
    q: float
    best: int
    top_group: list


def _exact_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    # Null distribution of W+ by counting subsets; ranks are multiples of 1/2.
    r2 = np.rint(ranks * 2).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts += shifted
    w = int(round(w_plus * 2))
    denom = counts.sum()
    lower = counts[:w + 1].sum() / denom
    upper = counts[w:].sum() / denom
    return min(1.0, 2.0 * float(min(lower, upper)))


def wilcoxon_signed_rank(a, b, mode: str = "auto") -> WilcoxonResult:
    """Two-sided signed-rank test of ``a - b``.

    Zero differences are dropped before ranking; tied magnitudes get average
    ranks. ``mode='exact'`` uses the full permutation distribution,
    ``'normal'`` the tie- and continuity-corrected normal approximation, and
    ``'auto'`` picks exact for up to 25 non-zero differences.

    The statistic is ``min(W+, W-)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and equally long")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    stat = min(w_plus, n * (n + 1) / 2 - w_plus)
    if mode == "auto":
        mode = "exact" if n <= EXACT_MAX_N else "normal"
    if mode == "exact":
        if n > EXACT_MAX_N:
            raise ValueError(f"exact mode supports at most {EXACT_MAX_N} non-zero differences")
        return WilcoxonResult(float(stat), float(_exact_two_sided(ranks, w_plus)), n)
    if mode != "normal":
        raise ValueError(f"unknown mode {mode!r}")
    mean = n * (n + 1) / 4
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - float((tie_counts ** 3 - tie_counts).sum()) / 48
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return WilcoxonResult(float(stat), min(1.0, math.erfc(z / math.sqrt(2))), n)


def friedman(table, alpha: float = 0.05, higher_is_better: bool = False) -> FriedmanResult:
    """Friedman rank test on a ``methods x tasks`` table.

    Within each task the best method gets rank 1 (the smallest value unless
    ``higher_is_better``); ties share the average rank.
    """
    tbl = np.asarray(table, dtype=float)
    if tbl.ndim != 2:
        raise ValueError("table must be 2-D (methods x tasks)")
    k, N = tbl.shape
    if k < 2 or N < 2:
        raise ValueError("Friedman test needs at least 2 methods and 2 tasks")
    scores = -tbl if higher_is_better else tbl
    ranks = np.apply_along_axis(rankdata, 0, scores)
    mean_ranks = ranks.mean(axis=1)
    stat = 12 * N / (k * (k + 1)) * (float((mean_ranks ** 2).sum()) - k * (k + 1) ** 2 / 4)
    stat = max(stat, 0.0)
    if np.all(tbl == tbl[0]):
        stat = 0.0
    p = float(chi2.sf(stat, k - 1))
    return FriedmanResult(float(stat), p, mean_ranks, p < alpha)


def critical_difference(k: int, n_tasks: int, alpha: float = 0.05) -> tuple[float, float]:
    """Bonferroni-Dunn critical difference and its normal quantile."""
    q = NormalDist().inv_cdf(1 - alpha / (2 * (k - 1)))
    return q * math.sqrt(k * (k + 1) / (6 * n_tasks)), q


def bonferroni_dunn(mean_ranks, n_tasks: int, alpha: float = 0.05,
                    friedman_p: float = None) -> BonferroniDunnResult:
    """Methods whose mean rank lies within one critical difference of the best.

    Only meaningful after the Friedman test rejects at ``alpha``;
    ``friedman_p`` must be supplied and below ``alpha``.
    """
    if friedman_p is None or not friedman_p < alpha:
        raise ContractError("post-hoc test requires a Friedman rejection at the same alpha")
    ranks = np.asarray(mean_ranks, dtype=float)
    k = len(ranks)
    if k < 2:
        raise ValueError("need at least two methods")
    cd, q = critical_difference(k, n_tasks, alpha)
    best = int(np.argmin(ranks))
    top = [i for i in range(k) if ranks[i] - ranks[best] <= cd]
    return BonferroniDunnResult(cd, q, best, top)

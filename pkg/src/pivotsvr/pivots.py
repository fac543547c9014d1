"""Turning-point detection and alternating pivot extraction.

Three importance criteria decide which local extrema count as pivots:

* ``degree``   - strict extremum against ``K`` neighbours on each side;
* ``impact``   - size of the swing that follows, until price crosses back
  through the pivot (a ratio >= 1 for both kinds);
* ``momentum`` - extreme price within a fixed lookahead window, relative to
  the pivot price (>= 1 for troughs, <= 1 for peaks).

:func:`alternate` turns the qualifying candidates into a sequence that
alternates peak/trough, where every interior peak is the highest price
between its neighbouring troughs and every interior trough the lowest price
between its neighbouring peaks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .series import as_prices

PEAK = "peak"
TROUGH = "trough"
CRITERIA = ("degree", "impact", "momentum")


class Pivot(NamedTuple):
    t: int
    kind: str
    value: float


@dataclass(frozen=True)
class PivotSpec:
    criterion: str = "impact"
    gamma: Optional[float] = 0.02
    degree: Optional[int] = None
    lookahead: Optional[int] = None

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}; expected one of {CRITERIA}")
        if self.criterion == "degree":
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("degree criterion needs an integer K >= 1")
        else:
            if self.gamma is None or not self.gamma > 0:
                raise ValueError(f"{self.criterion} criterion needs gamma > 0")
        if self.criterion == "momentum":
            if self.lookahead is None or int(self.lookahead) != self.lookahead or self.lookahead < 1:
                raise ValueError("momentum criterion needs an integer lookahead w >= 1")

    @classmethod
    def by_degree(cls, k: int) -> "PivotSpec":
        return cls("degree", gamma=None, degree=k)

    @classmethod
    def by_impact(cls, gamma: float) -> "PivotSpec":
        return cls("impact", gamma=gamma)

    @classmethod
    def by_momentum(cls, gamma: float, lookahead: int) -> "PivotSpec":
        return cls("momentum", gamma=gamma, lookahead=lookahead)

    def to_dict(self) -> dict:
        d = {"criterion": self.criterion}
        if self.criterion == "degree":
            d["degree"] = int(self.degree)
        else:
            d["gamma"] = float(self.gamma)
        if self.criterion == "momentum":
            d["lookahead"] = int(self.lookahead)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PivotSpec":
        return cls(d["criterion"], gamma=d.get("gamma"), degree=d.get("degree"),
                   lookahead=d.get("lookahead"))


@dataclass(frozen=True)
class AlternatingPivots:
    pivots: tuple

    def __post_init__(self):
        object.__setattr__(self, "pivots", tuple(Pivot(*p) for p in self.pivots))

    def __len__(self) -> int:
        return len(self.pivots)

    def __iter__(self):
        return iter(self.pivots)

    def __getitem__(self, i):
        return self.pivots[i]

    @property
    def indices(self) -> list[int]:
        return [p.t for p in self.pivots]


def find_pivots_degree(series, k: int) -> list[Pivot]:
    """Strict local extrema of degree ``k`` (boundary indices never qualify)."""
    if k < 1:
        raise ValueError("degree must be >= 1")
    x = as_prices(series)
    n = len(x)
    if n < 2 * k + 1:
        return []
    core = x[k:n - k]
    is_peak = np.ones(len(core), dtype=bool)
    is_trough = np.ones(len(core), dtype=bool)
    for j in range(1, k + 1):
        left = x[k - j:n - k - j]
        right = x[k + j:n - k + j]
        is_peak &= (core > left) & (core > right)
        is_trough &= (core < left) & (core < right)
    out = []
    for i in np.flatnonzero(is_peak | is_trough):
        t = int(i) + k
        out.append(Pivot(t, PEAK if is_peak[i] else TROUGH, float(x[t])))
    return out


def impact_of(series, t: int, kind: str) -> float:
    """Swing ratio following a pivot.

    Trough: highest price from ``t`` until the series first drops below
    ``x[t]`` (or to the end), divided by ``x[t]``. Peak: ``x[t]`` divided by
    the lowest price until the series first rises above ``x[t]``.
    """
    x = as_prices(series)
    if not 0 <= t < len(x) - 1:
        raise IndexError(f"impact undefined at t={t} (needs at least one later price)")
    xt = x[t]
    tail = x[t + 1:]
    if kind == TROUGH:
        cross = np.flatnonzero(tail < xt)
        stop = t + 1 + int(cross[0]) if len(cross) else len(x) - 1
        return float(x[t:stop + 1].max() / xt)
    if kind == PEAK:
        cross = np.flatnonzero(tail > xt)
        stop = t + 1 + int(cross[0]) if len(cross) else len(x) - 1
        return float(xt / x[t:stop + 1].min())
    raise ValueError(f"unknown pivot kind {kind!r}")


def momentum_of(series, t: int, w: int, kind: str) -> float:
    """Extreme price within ``x[t+1 .. t+w]`` relative to ``x[t]``."""
    x = as_prices(series)
    if w < 1:
        raise ValueError("lookahead must be >= 1")
    if t < 0 or t + w >= len(x):
        raise IndexError(f"momentum lookahead {w} runs past the series end at t={t}")
    window = x[t + 1:t + w + 1]
    if kind == TROUGH:
        return float(window.max() / x[t])
    if kind == PEAK:
        return float(window.min() / x[t])
    raise ValueError(f"unknown pivot kind {kind!r}")


def find_candidates(series, spec: PivotSpec) -> list[Pivot]:
    """Pivots satisfying ``spec``, sorted by time."""
    x = as_prices(series)
    if spec.criterion == "degree":
        return find_pivots_degree(x, spec.degree)
    base = find_pivots_degree(x, 1)
    if spec.criterion == "impact":
        return [p for p in base if impact_of(x, p.t, p.kind) >= 1.0 + spec.gamma]
    out = []
    for p in base:
        if p.t + spec.lookahead >= len(x):
            continue
        ratio = momentum_of(x, p.t, spec.lookahead, p.kind)
        if (p.kind == TROUGH and ratio >= 1.0 + spec.gamma) or (
                p.kind == PEAK and ratio <= 1.0 - spec.gamma):
            out.append(p)
    return out


def _better(kind: str, a: float, b: float) -> bool:
    return a > b if kind == PEAK else a < b


def alternate(series, candidates: Iterable[Pivot]) -> AlternatingPivots:
    """Clean a sorted candidate list into an alternating pivot sequence.

    First pass keeps the first candidate and then each next candidate of the
    opposite kind; everything skipped is retained as discarded. Second pass
    swaps each interior pivot for the most extreme same-kind candidate lying
    strictly between its two neighbours, when that candidate is strictly
    more extreme. The second pass repeats until nothing changes, since a
    replaced trough widens the interval its neighbouring peaks are judged on.
    """
    cands = [Pivot(int(p.t), p.kind, float(p.value)) for p in candidates]
    if not cands:
        return AlternatingPivots(())
    if any(a.t >= b.t for a, b in zip(cands, cands[1:])):
        raise ValueError("candidates must be sorted by strictly increasing t")

    kept = [cands[0]]
    for c in cands[1:]:
        if c.kind != kept[-1].kind:
            kept.append(c)

    if len(kept) < 3:
        return AlternatingPivots(kept)

    by_kind = {
        kind: [c for c in cands if c.kind == kind] for kind in (PEAK, TROUGH)
    }
    changed = True
    while changed:
        changed = False
        for kind in (PEAK, TROUGH):
            for pos in range(1, len(kept) - 1):
                cur = kept[pos]
                if cur.kind != kind:
                    continue
                lo, hi = kept[pos - 1].t, kept[pos + 1].t
                best = cur
                for c in by_kind[kind]:
                    if c.t <= lo:
                        continue
                    if c.t >= hi:
                        break
                    if _better(kind, c.value, best.value):
                        best = c
                if best is not cur:
                    kept[pos] = best
                    changed = True
    return AlternatingPivots(kept)


def extract_pivots(series, spec: PivotSpec) -> AlternatingPivots:
    """Candidates under ``spec`` followed by :func:`alternate`."""
    return alternate(series, find_candidates(series, spec))


def check_alternating(prices: Sequence[float], pivots: Sequence[Pivot]) -> list[str]:
    """Describe every alternation or interior-extremum violation (empty if none)."""
    x = as_prices(prices)
    problems = []
    for a, b in zip(pivots, pivots[1:]):
        if a.kind == b.kind:
            problems.append(f"consecutive {a.kind}s at t={a.t} and t={b.t}")
        if a.t >= b.t:
            problems.append(f"unordered pivots at t={a.t}, t={b.t}")
    for left, mid, right in zip(pivots, pivots[1:], pivots[2:]):
        span = x[left.t:right.t + 1]
        if mid.kind == PEAK and x[mid.t] < span.max():
            problems.append(f"peak at t={mid.t} is not the highest price in [{left.t}, {right.t}]")
        if mid.kind == TROUGH and x[mid.t] > span.min():
            problems.append(f"trough at t={mid.t} is not the lowest price in [{left.t}, {right.t}]")
    return problems

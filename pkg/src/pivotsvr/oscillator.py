"""Turning-point oscillator: 0 at troughs, 1 at peaks, interpolated on price."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateSwingError
from .pivots import PEAK, AlternatingPivots, extract_pivots
from .series import as_prices


@dataclass(frozen=True)
class Oscillator:
    """Oscillator values for indices ``offset .. offset + len(values) - 1``."""

    values: np.ndarray
    offset: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def stop(self) -> int:
        return self.offset + len(self.values)

    def defined(self, t: int) -> bool:
        return self.offset <= t < self.stop

    def __getitem__(self, t: int) -> float:
        if not self.defined(t):
            raise IndexError(f"oscillator undefined at t={t}")
        return float(self.values[t - self.offset])

    @property
    def indices(self) -> range:
        return range(self.offset, self.stop)


def build_oscillator(series, alt: AlternatingPivots) -> Oscillator:
    """Map prices between consecutive pivots onto [0, 1].

    Between a trough ``T`` and peak ``P`` the value is ``(x - T) / (P - T)``,
    clamped to [0, 1]. Pivot indices get exactly 0 (trough) or 1 (peak).
    """
    x = as_prices(series)
    pivots = list(alt)
    if len(pivots) < 2:
        raise ValueError("oscillator needs at least two pivots")
    start, stop = pivots[0].t, pivots[-1].t + 1
    values = np.empty(stop - start)
    for a, b in zip(pivots, pivots[1:]):
        peak, trough = (a, b) if a.kind == PEAK else (b, a)
        p, tr = x[peak.t], x[trough.t]
        if p == tr:
            raise DegenerateSwingError(
                f"peak at t={peak.t} and trough at t={trough.t} have equal price {p}")
        seg = (x[a.t:b.t + 1] - tr) / (p - tr)
        values[a.t - start:b.t - start + 1] = np.clip(seg, 0.0, 1.0)
    for pv in pivots:
        values[pv.t - start] = 1.0 if pv.kind == PEAK else 0.0
    return Oscillator(values, start)


def oscillator_for(series, spec) -> Oscillator:
    """Extract pivots under ``spec`` and build the oscillator in one step."""
    return build_oscillator(series, extract_pivots(series, spec))


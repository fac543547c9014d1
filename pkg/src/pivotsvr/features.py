"""Backward-window features: min-max normalised prices plus DFT amplitude/phase."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import EmptyDatasetError
from .oscillator import build_oscillator
from .pivots import PivotSpec, extract_pivots
from .series import as_prices


def normalize_window(window) -> np.ndarray:
    """Affine map of the window onto [0, 1]; a flat window maps to 0.5."""
    w = np.asarray(window, dtype=float)
    if w.ndim != 1 or len(w) < 2:
        raise ValueError("window must be 1-D with at least two prices")
    lo, hi = w.min(), w.max()
    if hi == lo:
        return np.full(len(w), 0.5)
    return (w - lo) / (hi - lo)


def dft_features(window) -> tuple[np.ndarray, np.ndarray]:
    """Amplitudes for bins 1..m/2 and phases for bins 1..m/2-1.

    Amplitudes are ``|c_k| * 2/m``; phases are mapped from (-pi, pi] to
    (0, 1] by ``(phi + pi) / (2 pi)``. The DC bin and the Nyquist phase are
    dropped. Operates on the window exactly as given.
    """
    w = np.asarray(window, dtype=float)
    m = len(w)
    if m < 2 or m % 2:
        raise ValueError(f"DFT features need an even window length, got {m}")
    coeffs = np.fft.rfft(w)
    amps = np.abs(coeffs[1:m // 2 + 1]) * (2.0 / m)
    phases = (np.angle(coeffs[1:m // 2]) + np.pi) / (2 * np.pi)
    return amps, phases


def n_features(m: int) -> int:
    return m + m // 2 + (m // 2 - 1)


class WindowFeatures(TransformerMixin, BaseEstimator):
    """Map raw price windows (one per row) to feature vectors.

    Each row becomes ``normalised prices (m) | amplitudes (m/2) |
    phases (m/2 - 1)``, every component in [0, 1]. Stateless: ``fit`` only
    records the window length.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] < 2 or X.shape[1] % 2:
            raise ValueError(f"window length must be even and >= 2, got {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X, dtype=np.float64)
        m = X.shape[1]
        if m < 2 or m % 2:
            raise ValueError(f"window length must be even and >= 2, got {m}")
        lo = X.min(axis=1, keepdims=True)
        span = X.max(axis=1, keepdims=True) - lo
        flat = span[:, 0] == 0
        norm = np.where(flat[:, None], 0.5, (X - lo) / np.where(span == 0, 1.0, span))
        coeffs = np.fft.rfft(norm, axis=1)
        amps = np.abs(coeffs[:, 1:m // 2 + 1]) * (2.0 / m)
        phases = (np.angle(coeffs[:, 1:m // 2]) + np.pi) / (2 * np.pi)
        return np.hstack([norm, amps, phases])

    def get_feature_names_out(self, input_features=None):
        m = self.n_features_in_
        return np.array(
            [f"price_{i}" for i in range(m)]
            + [f"amp_{k}" for k in range(1, m // 2 + 1)]
            + [f"phase_{k}" for k in range(1, m // 2)],
            dtype=object,
        )


def window_features(window) -> np.ndarray:
    """Feature vector of a single raw backward window."""
    norm = normalize_window(window)
    amps, phases = dft_features(norm)
    return np.concatenate([norm, amps, phases])


def window_matrix(series, indices, m: int) -> np.ndarray:
    """Stack the backward windows ``x[t-m:t]`` for each ``t`` in ``indices``."""
    x = as_prices(series)
    idx = np.asarray(list(indices), dtype=int)
    if len(idx) and (idx.min() < m or idx.max() > len(x)):
        raise IndexError(f"backward windows of length {m} undefined for some indices")
    if not len(idx):
        return np.empty((0, m))
    return x[idx[:, None] - m + np.arange(m)[None, :]]


def feature_matrix(series, indices, m: int) -> np.ndarray:
    windows = window_matrix(series, indices, m)
    if not len(windows):
        return np.empty((0, n_features(m)))
    return WindowFeatures().fit_transform(windows)


@dataclass(frozen=True)
class LabeledSet:
    """Feature rows, oscillator targets and the series index of each row."""

    X: np.ndarray
    y: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    @property
    def rows(self):
        return list(zip(self.X, self.y, self.t.tolist()))


def build_dataset(series, index_range: range, spec: PivotSpec, m: int,
                  history: bool = False) -> LabeledSet:
    """Label every eligible day of ``index_range`` with its oscillator value.

    Pivots and the oscillator are computed on the segment alone. By default
    a row needs its whole backward window inside the segment; with
    ``history=True`` windows may reach back into earlier prices.
    """
    x = as_prices(series)
    if index_range.step != 1 or index_range.start < 0 or index_range.stop > len(x):
        raise IndexError("range must be a contiguous slice of the series")
    seg = x[index_range.start:index_range.stop]
    first = m if not history else max(m - index_range.start, 0)
    if len(seg) <= first:
        raise EmptyDatasetError(f"segment of length {len(seg)} has no day with a full window")
    alt = extract_pivots(seg, spec)
    if len(alt) < 2:
        raise EmptyDatasetError(f"segment has {len(alt)} pivot(s); at least two are needed")
    osc = build_oscillator(seg, alt)
    rel = np.arange(max(first, osc.offset), osc.stop)
    if not len(rel):
        raise EmptyDatasetError("no day has both a backward window and an oscillator value")
    t = rel + index_range.start
    return LabeledSet(feature_matrix(x, t, m), osc.values[rel - osc.offset].copy(), t)


def export_dataset(data: LabeledSet, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"f_{i}" for i in range(data.X.shape[1])] + ["target"])
        for row, target, t in zip(data.X, data.y, data.t):
            writer.writerow([int(t)] + [repr(float(v)) for v in row] + [repr(float(target))])

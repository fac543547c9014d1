"""Price series container, CSV I/O, backward windows and task sampling."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import CapacityError, DataError


@dataclass(frozen=True)
class PriceSeries:
    """Immutable dated close-price sequence, optionally with open prices."""

    dates: tuple
    prices: np.ndarray
    opens: Optional[np.ndarray] = None

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != len(prices):
            raise DataError("dates and prices differ in length")
        if self.opens is not None:
            opens = np.asarray(self.opens, dtype=float)
            opens.setflags(write=False)
            object.__setattr__(self, "opens", opens)
            if len(opens) != len(prices):
                raise DataError("opens and prices differ in length")
            if not np.all(opens > 0):
                raise DataError("open prices must be positive")
        if not np.all(np.isfinite(prices)) or not np.all(prices > 0):
            raise DataError("prices must be finite and positive")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"dates not strictly increasing at {b}")

    def __len__(self) -> int:
        return len(self.prices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PriceSeries):
            return NotImplemented
        same_opens = (self.opens is None and other.opens is None) or (
            self.opens is not None
            and other.opens is not None
            and np.array_equal(self.opens, other.opens)
        )
        return (
            self.dates == other.dates
            and np.array_equal(self.prices, other.prices)
            and same_opens
        )

    __hash__ = None

    @classmethod
    def from_prices(cls, prices, start=dt.date(2000, 1, 3), opens=None) -> "PriceSeries":
        """Wrap a bare price array, assigning consecutive calendar dates."""
        dates = [start + dt.timedelta(days=i) for i in range(len(prices))]
        return cls(dates, prices, opens)

    def slice(self, start: int, stop: int) -> "PriceSeries":
        opens = None if self.opens is None else self.opens[start:stop]
        return PriceSeries(self.dates[start:stop], self.prices[start:stop], opens)


@dataclass(frozen=True)
class PredictionTask:
    """Contiguous train -> validation -> test index ranges into one series.

    Ranges are half-open ``range`` objects.
    """

    train: range
    validation: range
    test: range
    task_id: int = field(default=0, compare=False)

    def __post_init__(self):
        if not (
            self.train.stop == self.validation.start
            and self.validation.stop == self.test.start
        ):
            raise ValueError("segments must be contiguous and ordered")
        if min(len(self.train), len(self.validation), len(self.test)) < 1:
            raise ValueError("segments must be non-empty")

    @property
    def start(self) -> int:
        return self.train.start

    @property
    def stop(self) -> int:
        return self.test.stop


def _parse_date(text: str, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"line {lineno}: bad date {text!r}") from None


def _parse_price(text: str, lineno: int, column: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"line {lineno}: bad {column} value {text!r}") from None
    if not np.isfinite(value) or value <= 0:
        raise DataError(f"line {lineno}: {column} must be positive, got {text!r}")
    return value


def load_csv(path, date_col: str = "date", close_col: str = "close",
             open_col: Optional[str] = "open") -> PriceSeries:
    """Read a ``date,close[,open]`` CSV into a PriceSeries sorted by date.

    Column names are matched case-insensitively. Rows may arrive in any
    order; duplicate dates are rejected.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        cols = {name.strip().lower(): i for i, name in enumerate(header)}
        if date_col.lower() not in cols or close_col.lower() not in cols:
            raise DataError(f"{path}: header needs '{date_col}' and '{close_col}' columns")
        di, ci = cols[date_col.lower()], cols[close_col.lower()]
        oi = cols.get(open_col.lower()) if open_col else None

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            date = _parse_date(row[di], lineno)
            close = _parse_price(row[ci], lineno, close_col)
            opn = _parse_price(row[oi], lineno, open_col) if oi is not None else None
            rows.append((date, close, opn, lineno))

    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if prev[0] == cur[0]:
            raise DataError(f"line {cur[3]}: duplicate date {cur[0].isoformat()}")
    dates = [r[0] for r in rows]
    closes = [r[1] for r in rows]
    opens = [r[2] for r in rows] if oi is not None else None
    return PriceSeries(dates, closes, opens)


def write_csv(series: PriceSeries, path) -> None:
    """Write a series in the format :func:`load_csv` reads (exact round trip)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if series.opens is None:
            writer.writerow(["date", "close"])
            for d, p in zip(series.dates, series.prices):
                writer.writerow([d.isoformat(), repr(float(p))])
        else:
            writer.writerow(["date", "close", "open"])
            for d, p, o in zip(series.dates, series.prices, series.opens):
                writer.writerow([d.isoformat(), repr(float(p)), repr(float(o))])


def backward_window(series, t: int, m: int) -> np.ndarray:
    """Return the ``m`` prices strictly before index ``t``."""
    prices = series.prices if isinstance(series, PriceSeries) else np.asarray(series, dtype=float)
    if m < 1:
        raise ValueError("window length must be positive")
    if t < m or t > len(prices):
        raise IndexError(f"backward window of length {m} undefined at t={t}")
    return np.array(prices[t - m:t], dtype=float)


def sample_tasks(series, n_tasks: int, n_train: int = 504, n_valid: int = 60,
                 n_test: int = 60, seed: int = 0) -> list[PredictionTask]:
    """Draw ``n_tasks`` train/validation/test triplets uniformly (with replacement)."""
    n = len(series)
    span = n_train + n_valid + n_test
    if min(n_train, n_valid, n_test) < 1:
        raise ValueError("segment lengths must be positive")
    if n < span:
        raise CapacityError(f"series of length {n} cannot hold a {span}-day task")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, n - span + 1, size=n_tasks)
    tasks = []
    for i, s in enumerate(starts.tolist()):
        tasks.append(PredictionTask(
            train=range(s, s + n_train),
            validation=range(s + n_train, s + n_train + n_valid),
            test=range(s + n_train + n_valid, s + span),
            task_id=i,
        ))
    return tasks


def as_prices(series) -> np.ndarray:
    """Accept a PriceSeries or any 1-D array-like and return a float array."""
    if isinstance(series, PriceSeries):
        return series.prices
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a 1-D price sequence")
    return arr


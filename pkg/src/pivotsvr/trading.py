"""Buy-low/sell-high trading on predicted oscillator values, and its metrics.

Signals are evaluated at the close of day ``t`` and executed on day
``t + 1``: at the open when open prices are available, otherwise at the
close. A position still open when the segment ends is reported but left
out of every metric.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from .selection import Thresholds

TRADING_DAYS = 252


class Trade(NamedTuple):
    b: int
    s: int
    entry: Optional[float] = None
    exit: Optional[float] = None

    @property
    def factor(self) -> float:
        return self.exit / self.entry


@dataclass(frozen=True)
class TradeLog:
    trades: tuple = ()
    open_position: Optional[int] = None

    def __post_init__(self):
        trades = tuple(Trade(*t) for t in self.trades)
        object.__setattr__(self, "trades", trades)
        for t in trades:
            if not t.b < t.s:
                raise ValueError(f"trade exits at {t.s} before entering at {t.b}")
        for a, b in zip(trades, trades[1:]):
            if not a.s < b.b:
                raise ValueError("trades overlap")

    def __len__(self) -> int:
        return len(self.trades)


@dataclass(frozen=True)
class PerformanceReport:
    ret: float
    RET: float
    mdd: float
    sharpe: Optional[float]
    asr: Optional[float]
    success_rate: Optional[float]
    n_trades: int

    def to_dict(self) -> dict:
        return asdict(self)


def generate_signals(gamma_hat, th: Thresholds) -> TradeLog:
    """Scan predictions: buy below ``t_low`` when flat, sell above ``t_high``
    when long. Returned trades hold trigger days only (no prices)."""
    trades = []
    entry = None
    for t, v in enumerate(np.asarray(gamma_hat, dtype=float)):
        if entry is None:
            if v < th.t_low:
                entry = t
        elif v > th.t_high:
            trades.append(Trade(entry, t))
            entry = None
    return TradeLog(tuple(trades), entry)


def execute(signals: TradeLog, closes, opens=None) -> TradeLog:
    """Fill trigger days on the following day of the segment.

    A buy triggered on the last day is never filled; a sell that would fill
    past the end leaves the position open.
    """
    closes = np.asarray(closes, dtype=float)
    fill = closes if opens is None else np.asarray(opens, dtype=float)
    n = len(closes)
    trades = []
    open_position = None
    for tr in signals.trades:
        b, s = tr.b + 1, tr.s + 1
        if b >= n:
            break
        if s >= n:
            open_position = b
            break
        trades.append(Trade(b, s, float(fill[b]), float(fill[s])))
    else:
        if signals.open_position is not None and signals.open_position + 1 < n:
            open_position = signals.open_position + 1
    return TradeLog(tuple(trades), open_position)


def cumulative_return(log: TradeLog) -> float:
    return float(math.prod(t.exit / t.entry for t in log.trades))


def annualized_return(ret: float, n: int) -> float:
    if n < 1:
        raise ValueError("segment length must be positive")
    return ret ** (TRADING_DAYS / n)


def roc_curve(closes, log: TradeLog) -> np.ndarray:
    """Daily wealth factors: 1 when flat, price ratio while holding.

    On the entry day the factor is ``close / entry`` and on the exit day
    ``exit / previous close``, so each trade's factors multiply to exactly
    ``exit / entry``.
    """
    x = np.asarray(closes, dtype=float)
    roc = np.ones(len(x))
    for t in log.trades:
        roc[t.b] = x[t.b] / t.entry
        roc[t.b + 1:t.s] = x[t.b + 1:t.s] / x[t.b:t.s - 1]
        roc[t.s] = t.exit / x[t.s - 1]
    return roc


def max_drawdown(roc, absolute: bool = False) -> float:
    """Largest drop of the wealth curve below its running peak.

    Returned as a fraction of the peak, or as a plain wealth difference when
    ``absolute`` is set. Wealth starts at 1.
    """
    wealth = np.concatenate([[1.0], np.cumprod(np.asarray(roc, dtype=float))])
    peak = np.maximum.accumulate(wealth)
    drop = peak - wealth
    return float((drop if absolute else drop / peak).max())


def sharpe(ret: float, roc) -> Optional[float]:
    sd = float(np.std(roc))
    return None if sd == 0 else (ret - 1) / sd


def asr(RET: float, roc) -> Optional[float]:
    sd = float(np.std(roc))
    return None if sd == 0 else (RET - 1) / (sd * math.sqrt(TRADING_DAYS))


def success_rate(log: TradeLog) -> Optional[float]:
    if not log.trades:
        return None
    return sum(t.exit > t.entry for t in log.trades) / len(log.trades)


def evaluate(closes, log: TradeLog, mdd_absolute: bool = False) -> PerformanceReport:
    n = len(closes)
    roc = roc_curve(closes, log)
    ret = cumulative_return(log)
    RET = annualized_return(ret, n)
    return PerformanceReport(
        ret=ret,
        RET=RET,
        mdd=max_drawdown(roc, absolute=mdd_absolute),
        sharpe=sharpe(ret, roc),
        asr=asr(RET, roc),
        success_rate=success_rate(log),
        n_trades=len(log.trades),
    )


def backtest(closes, gamma_hat, th: Thresholds, opens=None, mdd_absolute: bool = False):
    """Signals, fills and metrics for one segment.

    Returns ``(executed_log, report, roc)``.
    """
    if len(gamma_hat) != len(closes):
        raise ValueError("predictions must align with the segment's prices")
    log = execute(generate_signals(gamma_hat, th), closes, opens)
    return log, evaluate(closes, log, mdd_absolute), roc_curve(closes, log)


def bah_log(closes, opens=None) -> TradeLog:
    x = np.asarray(closes, dtype=float)
    entry = float(x[0] if opens is None else opens[0])
    return TradeLog((Trade(0, len(x) - 1, entry, float(x[-1])),))


def bah_report(closes, opens=None, mdd_absolute: bool = False) -> PerformanceReport:
    """Buy at the start of the segment, sell at the final close."""
    return evaluate(closes, bah_log(closes, opens), mdd_absolute)


def position_series(n: int, log: TradeLog) -> np.ndarray:
    """1 on days the strategy holds stock at the close, else 0."""
    pos = np.zeros(n, dtype=int)
    for t in log.trades:
        pos[t.b:t.s] = 1
    return pos

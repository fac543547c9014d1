"""Multi-task experiment harness: sample tasks, select, predict, trade, aggregate."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import DataError, PivotSVRError
from .pivots import PivotSpec
from .selection import DEFAULT_C, DEFAULT_EPSILON, DEFAULT_SIGMA, fit_predictor, threshold_grid
from .series import PredictionTask, PriceSeries, load_csv, sample_tasks
from .stats import wilcoxon_signed_rank
from .trading import backtest, bah_report

log = logging.getLogger(__name__)

METRICS = ("ret", "RET", "mdd", "sharpe", "asr", "success_rate", "n_trades")

TASK_COLUMNS = (
    ["task_id", "status", "train_start", "valid_start", "test_start", "test_stop",
     "C", "sigma", "epsilon", "t_low", "t_high", "valid_tprmse"]
    + [f"svr_{m}" for m in METRICS]
    + [f"bah_{m}" for m in METRICS]
)


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment run; stored as JSON."""

    csv: Optional[str] = None
    criterion: str = "impact"
    gamma: Optional[float] = 0.02
    degree: Optional[int] = None
    lookahead: Optional[int] = None
    window: int = 8
    grid_c: list = field(default_factory=lambda: list(DEFAULT_C))
    grid_sigma: list = field(default_factory=lambda: list(DEFAULT_SIGMA))
    grid_eps: list = field(default_factory=lambda: list(DEFAULT_EPSILON))
    threshold_step: float = 0.01
    n_train: int = 504
    n_valid: int = 60
    n_test: int = 60
    n_tasks: int = 300
    seed: int = 0
    output: str = "experiment"
    mdd_absolute: bool = False

    def __post_init__(self):
        self.grid_c = [float(v) for v in self.grid_c]
        self.grid_sigma = [float(v) for v in self.grid_sigma]
        self.grid_eps = [float(v) for v in self.grid_eps]
        self.spec()
        threshold_grid(self.threshold_step)
        if self.window < 2:
            raise ValueError("window must be at least 2")
        if min(self.n_train, self.n_valid, self.n_test, self.n_tasks) < 1:
            raise ValueError("segment lengths and n_tasks must be positive")
        if not (self.grid_c and self.grid_sigma and self.grid_eps):
            raise ValueError("hyper-parameter grids must be non-empty")

    def spec(self) -> PivotSpec:
        if self.criterion == "degree":
            return PivotSpec.by_degree(self.degree)
        if self.criterion == "momentum":
            return PivotSpec.by_momentum(self.gamma, self.lookahead)
        return PivotSpec(self.criterion, gamma=self.gamma)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise DataError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)


def run_task(series: PriceSeries, task: PredictionTask, config: ExperimentConfig) -> dict:
    """Select a model on train/validation, then trade the test segment.

    Prices from ``task.test.stop`` onward are never read; test prices enter
    only through the backward windows of test-day predictions.
    """
    x = series.prices
    fp = fit_predictor(
        x, task.train, task.validation, config.spec(), config.window,
        C=config.grid_c, sigma=config.grid_sigma, epsilon=config.grid_eps,
        thresholds=threshold_grid(config.threshold_step))
    gamma_hat = fp.predict(x[:task.test.stop], task.test)
    closes = x[task.test.start:task.test.stop]
    opens = None if series.opens is None else series.opens[task.test.start:task.test.stop]
    _, report, _ = backtest(closes, gamma_hat, fp.thresholds, opens, config.mdd_absolute)
    bah = bah_report(closes, opens, config.mdd_absolute)
    row = {
        "task_id": task.task_id, "status": "ok",
        "train_start": task.train.start, "valid_start": task.validation.start,
        "test_start": task.test.start, "test_stop": task.test.stop,
        **fp.params,
        "t_low": fp.thresholds.t_low, "t_high": fp.thresholds.t_high,
        "valid_tprmse": fp.score,
    }
    for m in METRICS:
        row[f"svr_{m}"] = getattr(report, m)
        row[f"bah_{m}"] = getattr(bah, m)
    return row


def _safe_task(series, task, config) -> dict:
    try:
        return run_task(series, task, config)
    except PivotSVRError as exc:
        log.warning("task %d failed: %s", task.task_id, exc)
        row = dict.fromkeys(TASK_COLUMNS)
        row.update(task_id=task.task_id, status=f"failed: {type(exc).__name__}: {exc}",
                   train_start=task.train.start, valid_start=task.validation.start,
                   test_start=task.test.start, test_stop=task.test.stop)
        return row


def worker_count(requested: Optional[int] = None) -> int:
    """Pool size: ``requested``, capped by ``PIVOTSVR_THREADS`` when set."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("PIVOTSVR_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"PIVOTSVR_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def is_defined(v) -> bool:
    return v is not None and not (isinstance(v, float) and math.isnan(v))


def _mean_se(values) -> dict:
    arr = np.asarray(values, dtype=float)
    if not len(arr):
        return {"mean": None, "se": None, "n": 0}
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else None
    return {"mean": math.fsum(arr) / len(arr), "se": se, "n": len(arr)}


def summarize(rows: list) -> dict:
    """Aggregate per-task rows into means, standard errors and SVR-vs-BAH tests.

    Failed tasks are excluded and counted. For each metric, a task whose
    value is undefined (no trades, flat wealth) is left out of that metric's
    average and of its paired test.
    """
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {"n_tasks": len(rows), "n_ok": len(ok), "n_failed": len(rows) - len(ok),
               "metrics": {}}
    for m in METRICS:
        svr = [r[f"svr_{m}"] for r in ok if is_defined(r[f"svr_{m}"])]
        bah = [r[f"bah_{m}"] for r in ok if is_defined(r[f"bah_{m}"])]
        pairs = [(r[f"svr_{m}"], r[f"bah_{m}"]) for r in ok
                 if is_defined(r[f"svr_{m}"]) and is_defined(r[f"bah_{m}"])]
        entry = {"svr": _mean_se(svr), "bah": _mean_se(bah),
                 "excluded_svr": len(ok) - len(svr), "excluded_bah": len(ok) - len(bah)}
        if pairs:
            a, b = zip(*pairs)
            w = wilcoxon_signed_rank(a, b)
            entry["wilcoxon"] = {"statistic": w.statistic, "p": w.pvalue, "n": w.n}
        else:
            entry["wilcoxon"] = None
        summary["metrics"][m] = entry
    return summary


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(rows: list, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TASK_COLUMNS)
        for r in rows:
            writer.writerow([_cell(r.get(c)) for c in TASK_COLUMNS])


_INT_COLUMNS = {"task_id", "train_start", "valid_start", "test_start", "test_stop",
                "svr_n_trades", "bah_n_trades"}


def read_rows(path) -> list:
    """Parse a per-task CSV written by :func:`write_rows`."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "status" not in reader.fieldnames:
            raise DataError(f"{path}: not a per-task experiment CSV")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            row = {}
            for k, v in raw.items():
                try:
                    if k == "status":
                        row[k] = v
                    elif v == "":
                        row[k] = None
                    elif k in _INT_COLUMNS:
                        row[k] = int(v)
                    else:
                        row[k] = float(v)
                except (TypeError, ValueError):
                    raise DataError(f"{path}: line {lineno}: bad {k} value {v!r}") from None
            rows.append(row)
    return rows


@dataclass
class ExperimentResult:
    rows: list
    summary: dict
    tasks: list


def run_experiment(config: ExperimentConfig, series: Optional[PriceSeries] = None,
                   n_jobs: Optional[int] = None, write: bool = True) -> ExperimentResult:
    """Run every sampled task and aggregate.

    Tasks run in a worker pool; rows are reduced in task order so the output
    does not depend on scheduling. With ``write`` the directory
    ``config.output`` receives ``config.json``, ``tasks.csv`` and
    ``summary.json``.
    """
    if series is None:
        if not config.csv:
            raise ValueError("config has no csv path and no series was given")
        series = load_csv(config.csv)
    tasks = sample_tasks(series, config.n_tasks, config.n_train, config.n_valid,
                         config.n_test, config.seed)
    workers = min(worker_count(n_jobs), len(tasks))
    log.info("running %d tasks on %d worker(s)", len(tasks), workers)
    if workers == 1:
        rows = []
        for i, task in enumerate(tasks, 1):
            rows.append(_safe_task(series, task, config))
            log.info("task %d/%d done", i, len(tasks))
    else:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=workers)(delayed(_safe_task)(series, t, config) for t in tasks)
    rows.sort(key=lambda r: r["task_id"])
    summary = summarize(rows)
    if summary["n_failed"]:
        log.warning("%d of %d tasks failed and are excluded", summary["n_failed"], len(rows))
    if write:
        out = Path(config.output)
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.json")
        write_rows(rows, out / "tasks.csv")
        write_summary(summary, out / "summary.json")
    return ExperimentResult(rows, summary, tasks)


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

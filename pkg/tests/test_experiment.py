import json

import numpy as np
import pytest

from pivotsvr import experiment as exp
from pivotsvr.pivots import PivotSpec
from pivotsvr.selection import fit_predictor, threshold_grid
from pivotsvr.series import PriceSeries, sample_tasks, write_csv
from pivotsvr.trading import backtest, bah_report


def synthetic(n=600, seed=4):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    x = 100 * (1 + 0.05 * np.sin(2 * np.pi * t / 40)) * np.exp(np.cumsum(rng.normal(0, 0.002, n)))
    return PriceSeries.from_prices(x)


def small_config(tmp_path, **kw):
    base = dict(n_train=200, n_valid=60, n_test=60, n_tasks=3, seed=11, grid_c=[1.0, 100.0],
                grid_sigma=[1.0], grid_eps=[0.05], output=str(tmp_path / "out"))
    base.update(kw)
    return exp.ExperimentConfig(**base)


def test_single_task_equals_manual_composition(tmp_path):
    series = synthetic()
    cfg = small_config(tmp_path, n_tasks=1)
    res = exp.run_experiment(cfg, series, n_jobs=1)
    (task,) = sample_tasks(series, 1, 200, 60, 60, seed=11)
    fp = fit_predictor(series.prices, task.train, task.validation, PivotSpec.by_impact(0.02), 8,
                       C=[1.0, 100.0], sigma=[1.0], epsilon=[0.05], thresholds=threshold_grid(0.01))
    gh = fp.predict(series.prices, task.test)
    closes = series.prices[task.test.start:task.test.stop]
    _, rep, _ = backtest(closes, gh, fp.thresholds)
    bah = bah_report(closes)
    row = res.rows[0]
    assert row["status"] == "ok" and row["test_start"] == task.test.start
    assert (row["C"], row["sigma"], row["epsilon"]) == (fp.params["C"], fp.params["sigma"],
                                                         fp.params["epsilon"])
    assert (row["t_low"], row["t_high"], row["valid_tprmse"]) == (
        fp.thresholds.t_low, fp.thresholds.t_high, fp.score)
    for m in exp.METRICS:
        assert row[f"svr_{m}"] == getattr(rep, m)
        assert row[f"bah_{m}"] == getattr(bah, m)


def test_rerun_is_byte_identical_and_pool_independent(tmp_path):
    series = synthetic()
    a = small_config(tmp_path, output=str(tmp_path / "a"))
    b = small_config(tmp_path, output=str(tmp_path / "b"))
    c = small_config(tmp_path, output=str(tmp_path / "c"))
    exp.run_experiment(a, series, n_jobs=1)
    exp.run_experiment(b, series, n_jobs=1)
    exp.run_experiment(c, series, n_jobs=2)
    for name in ("tasks.csv", "summary.json"):
        first = (tmp_path / "a" / name).read_bytes()
        assert first == (tmp_path / "b" / name).read_bytes()
        assert first == (tmp_path / "c" / name).read_bytes()


def test_summary_recomputes_from_task_rows(tmp_path):
    series = synthetic()
    cfg = small_config(tmp_path, n_tasks=4)
    res = exp.run_experiment(cfg, series, n_jobs=1)
    out = tmp_path / "out"
    rows = exp.read_rows(out / "tasks.csv")
    assert exp.summarize(rows) == json.loads((out / "summary.json").read_text())
    assert exp.summarize(rows) == json.loads(json.dumps(res.summary))
    assert exp.ExperimentConfig.load(out / "config.json") == cfg


def test_test_prices_never_influence_selection(tmp_path):
    series = synthetic()
    cfg = small_config(tmp_path, n_tasks=1)
    (task,) = sample_tasks(series, 1, 200, 60, 60, seed=11)
    poisoned = series.prices.copy()
    poisoned[task.test.start:] *= np.linspace(0.5, 2.0, len(poisoned) - task.test.start)
    a = exp.run_task(series, task, cfg)
    b = exp.run_task(PriceSeries(series.dates, poisoned), task, cfg)
    for key in ("C", "sigma", "epsilon", "t_low", "t_high", "valid_tprmse"):
        assert a[key] == b[key]


def test_failed_tasks_are_marked_and_excluded(tmp_path, caplog):
    x = synthetic().prices.copy()
    x[:320] = 100.0  # flat training/validation window: no pivots
    series = PriceSeries.from_prices(x)
    cfg = small_config(tmp_path, n_train=200, n_tasks=4, seed=3)
    tasks = sample_tasks(series, 4, 200, 60, 60, seed=3)
    flat = [t.task_id for t in tasks if t.train.stop <= 320]
    res = exp.run_experiment(cfg, series, n_jobs=1)
    statuses = {r["task_id"]: r["status"] for r in res.rows}
    assert flat, "fixture should contain at least one flat task"
    for i in flat:
        assert statuses[i].startswith("failed: EmptyDatasetError")
    assert res.summary["n_failed"] == len(flat)
    assert res.summary["n_ok"] == 4 - len(flat)
    assert "failed" in caplog.text


def test_undefined_metrics_excluded_from_averages():
    ok = {"status": "ok"}
    rows = []
    for i, (s, b) in enumerate([(None, 1.0), (2.0, 3.0), (4.0, None)]):
        row = dict.fromkeys(exp.TASK_COLUMNS)
        row.update(ok, task_id=i)
        for m in exp.METRICS:
            row[f"svr_{m}"] = 1.0
            row[f"bah_{m}"] = 1.0
        row["svr_sharpe"], row["bah_sharpe"] = s, b
        rows.append(row)
    rows.append({**dict.fromkeys(exp.TASK_COLUMNS), "task_id": 3, "status": "failed: x"})
    summary = exp.summarize(rows)
    sh = summary["metrics"]["sharpe"]
    assert sh["svr"]["n"] == 2 and sh["svr"]["mean"] == 3.0
    assert sh["bah"]["n"] == 2 and sh["bah"]["mean"] == 2.0
    assert sh["excluded_svr"] == 1 and sh["wilcoxon"]["n"] == 1
    assert summary["n_failed"] == 1


def test_config_validation_and_round_trip(tmp_path):
    cfg = exp.ExperimentConfig(criterion="momentum", gamma=0.03, lookahead=5, n_tasks=7)
    cfg.save(tmp_path / "c.json")
    assert exp.ExperimentConfig.load(tmp_path / "c.json") == cfg
    assert cfg.spec() == PivotSpec.by_momentum(0.03, 5)
    with pytest.raises(ValueError):
        exp.ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        exp.ExperimentConfig(criterion="degree")
    with pytest.raises(ValueError):
        exp.ExperimentConfig(threshold_step=0.3)
    with pytest.raises(ValueError):
        exp.ExperimentConfig(grid_c=[])


def test_worker_count_respects_env(monkeypatch):
    monkeypatch.setenv("PIVOTSVR_THREADS", "1")
    assert exp.worker_count(8) == 1
    monkeypatch.setenv("PIVOTSVR_THREADS", "3")
    assert exp.worker_count(2) == 2 and exp.worker_count(8) == 3
    monkeypatch.setenv("PIVOTSVR_THREADS", "x")
    with pytest.raises(ValueError):
        exp.worker_count()


def test_loads_series_from_config_csv(tmp_path):
    series = synthetic()
    write_csv(series, tmp_path / "p.csv")
    cfg = small_config(tmp_path, n_tasks=1, csv=str(tmp_path / "p.csv"))
    direct = exp.run_experiment(cfg, series, n_jobs=1, write=False)
    from_file = exp.run_experiment(cfg, n_jobs=1, write=False)
    assert direct.rows == from_file.rows

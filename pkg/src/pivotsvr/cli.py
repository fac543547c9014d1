"""Command-line entry point: ``pivotsvr <subcommand> ...``.

Data goes to files or stdout, progress and warnings to stderr. Exit codes:
0 success, 1 usage error, 2 data error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as exp
from .exceptions import ConvergenceError, DataError, SelectionError
from .oscillator import oscillator_for
from .pivots import PivotSpec, extract_pivots
from .selection import (DEFAULT_C, DEFAULT_EPSILON, DEFAULT_SIGMA, FittedPredictor,
                        Thresholds, fit_predictor, threshold_grid)
from .series import load_csv
from .stats import bonferroni_dunn, friedman
from .svr import load_model, save_model
from .trading import backtest, position_series

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

log = logging.getLogger("pivotsvr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_spec_args(p):
    p.add_argument("--criterion", choices=["degree", "impact", "momentum"], default="impact")
    p.add_argument("--gamma", type=float, default=0.02, help="impact/momentum threshold")
    p.add_argument("--degree", type=int, help="K for the degree criterion")
    p.add_argument("--lookahead", type=int, help="window w for the momentum criterion")


def _spec(args) -> PivotSpec:
    if args.criterion == "degree":
        return PivotSpec.by_degree(args.degree)
    if args.criterion == "momentum":
        return PivotSpec.by_momentum(args.gamma, args.lookahead)
    return PivotSpec.by_impact(args.gamma)


def _out(path):
    """Open ``path`` for writing, or stdout when no path is given."""
    if path in (None, "-"):
        return _Stdout()
    return open(path, "w", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def _segment(series, start, stop):
    stop = len(series) if stop is None else stop
    if not 0 <= start < stop <= len(series):
        raise DataError(f"range [{start}, {stop}) does not fit a series of length {len(series)}")
    return start, stop


# ------------------------------------------------------------------ commands

def cmd_pivots(args) -> int:
    series = load_csv(args.csv)
    start, stop = _segment(series, args.start, args.stop)
    alt = extract_pivots(series.prices[start:stop], _spec(args))
    with _out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "kind", "value"])
        for p in alt:
            w.writerow([series.dates[start + p.t].isoformat(), p.kind, repr(float(p.value))])
    return EXIT_OK


def cmd_oscillator(args) -> int:
    series = load_csv(args.csv)
    start, stop = _segment(series, args.start, args.stop)
    osc = oscillator_for(series.prices[start:stop], _spec(args))
    with _out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "gamma"])
        for t in osc.indices:
            w.writerow([series.dates[start + t].isoformat(), repr(float(osc[t]))])
    return EXIT_OK


def _meta_path(model_path) -> Path:
    return Path(str(model_path) + ".json")


def cmd_train(args) -> int:
    series = load_csv(args.csv)
    train = range(args.start, args.start + args.n_train)
    valid = range(train.stop, train.stop + args.n_valid)
    if valid.stop > len(series):
        raise DataError(f"series of length {len(series)} cannot hold {args.n_train}+{args.n_valid} "
                        f"days from index {args.start}")
    log.info("training on [%d, %d), validating on [%d, %d)", train.start, train.stop,
             valid.start, valid.stop)
    fp = fit_predictor(series.prices, train, valid, _spec(args), args.window,
                       C=args.grid_c, sigma=args.grid_sigma, epsilon=args.grid_eps,
                       thresholds=threshold_grid(args.threshold_step))
    save_model(fp.model, args.model)
    meta = {
        "spec": fp.spec.to_dict(), "window": fp.window, "params": fp.params,
        "thresholds": {"t_low": fp.thresholds.t_low, "t_high": fp.thresholds.t_high},
        "valid_tprmse": fp.score, "train": [train.start, train.stop],
        "validation": [valid.start, valid.stop],
    }
    _meta_path(args.model).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _load_predictor(model_path) -> FittedPredictor:
    model = load_model(model_path)
    try:
        meta = json.loads(_meta_path(model_path).read_text())
        th = Thresholds(**meta["thresholds"])
        return FittedPredictor(model, th, PivotSpec.from_dict(meta["spec"]), int(meta["window"]),
                               float(meta["valid_tprmse"]))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read model metadata for {model_path}: {exc}") from None


def cmd_predict(args) -> int:
    series = load_csv(args.csv)
    fp = _load_predictor(args.model)
    start, stop = _segment(series, max(args.start, fp.window), args.stop)
    idx = range(start, stop)
    gh = fp.predict(series.prices[:stop], idx)
    with _out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "gamma_hat"])
        for t, v in zip(idx, gh):
            w.writerow([series.dates[t].isoformat(), repr(float(v))])
    return EXIT_OK


def cmd_backtest(args) -> int:
    series = load_csv(args.csv)
    fp = _load_predictor(args.model)
    start, stop = _segment(series, args.start, args.stop)
    if start < fp.window:
        raise DataError(f"test segment must start at or after index {fp.window}")
    gh = fp.predict(series.prices[:stop], range(start, stop))
    closes = series.prices[start:stop]
    opens = None if series.opens is None else series.opens[start:stop]
    trades, report, roc = backtest(closes, gh, fp.thresholds, opens, args.mdd_absolute)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"report": report.to_dict(), "thresholds": fp.thresholds.__dict__,
               "trades": [t._asdict() for t in trades.trades],
               "open_position": trades.open_position,
               "segment": [start, stop]}
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    pos = position_series(len(closes), trades)
    wealth = np.cumprod(roc)
    with (out / "days.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "position", "roc", "wealth"])
        for i in range(len(closes)):
            w.writerow([series.dates[start + i].isoformat(), int(pos[i]), repr(float(roc[i])),
                        repr(float(wealth[i]))])
    return EXIT_OK


def _config_from_args(args) -> exp.ExperimentConfig:
    base = exp.ExperimentConfig.load(args.config).to_dict() if args.config else {}
    overrides = {
        "csv": args.csv, "criterion": args.criterion, "gamma": args.gamma,
        "degree": args.degree, "lookahead": args.lookahead, "window": args.window,
        "grid_c": args.grid_c, "grid_sigma": args.grid_sigma, "grid_eps": args.grid_eps,
        "threshold_step": args.threshold_step, "n_train": args.n_train,
        "n_valid": args.n_valid, "n_test": args.n_test, "n_tasks": args.n_tasks,
        "seed": args.seed, "output": args.out_dir,
        "mdd_absolute": args.mdd_absolute or None,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return exp.ExperimentConfig.from_dict(base)


def cmd_experiment(args) -> int:
    config = _config_from_args(args)
    result = exp.run_experiment(config, n_jobs=args.threads)
    s = result.summary
    log.info("%d tasks, %d ok, %d failed; artifacts in %s", s["n_tasks"], s["n_ok"],
             s["n_failed"], config.output)
    return EXIT_OK


# ------------------------------------------------------------------ report

_PERCENT = {"ret", "RET", "mdd", "success_rate"}


def _fmt(metric, stat) -> str:
    if stat["mean"] is None:
        return "n/a"
    mean, se = stat["mean"], stat["se"]
    if metric in ("ret", "RET"):
        mean = mean - 1
    if metric in _PERCENT:
        body = f"{100 * mean:.2f}%"
        return body if se is None else f"{body}±{100 * se:.2f}%"
    return f"{mean:.2f}" if se is None else f"{mean:.2f}±{se:.2f}"


def format_summary(summary: dict, alpha: float = 0.05) -> str:
    """Metric table: SVR and BAH mean ± standard error, Wilcoxon p and a
    ``*`` marker when the difference is significant at ``alpha``."""
    lines = [f"tasks: {summary['n_tasks']} (ok {summary['n_ok']}, failed {summary['n_failed']})",
             f"{'metric':<14}{'SVR':>22}{'BAH':>22}{'p':>10}"]
    for m, entry in summary["metrics"].items():
        w = entry["wilcoxon"]
        p = "n/a" if w is None else f"{w['p']:.4f}"
        mark = "*" if w is not None and w["p"] < alpha else ""
        lines.append(f"{m:<14}{_fmt(m, entry['svr']):>22}{_fmt(m, entry['bah']):>22}"
                     f"{p:>10}{mark}")
    return "\n".join(lines)


_HIGHER_BETTER = {"ret": True, "RET": True, "sharpe": True, "asr": True,
                  "success_rate": True, "mdd": False}


def _by_task(rows, column) -> dict:
    return {r["task_id"]: r[column] for r in rows
            if r["status"] == "ok" and exp.is_defined(r[column])}


def rank_comparison(methods: dict, metric: str, alpha: float = 0.05) -> dict:
    """Friedman ranking of methods (name -> {task_id: value}) on the tasks
    they all completed, with the Bonferroni-Dunn top group on rejection."""
    names = list(methods)
    common = sorted(set.intersection(*(set(v) for v in methods.values())))
    if len(common) < 2:
        return {"metric": metric, "n": len(common), "friedman": None}
    table = [[methods[n][i] for i in common] for n in names]
    fr = friedman(table, alpha, higher_is_better=_HIGHER_BETTER.get(metric, True))
    out = {"metric": metric, "n": len(common),
           "mean_ranks": dict(zip(names, map(float, fr.mean_ranks))),
           "friedman": {"statistic": fr.statistic, "p": fr.pvalue}}
    if fr.rejected:
        bd = bonferroni_dunn(fr.mean_ranks, len(common), alpha, fr.pvalue)
        out["cd"] = bd.cd
        out["top_group"] = [names[i] for i in bd.top_group]
    return out


def cmd_report(args) -> int:
    runs = [exp.read_rows(p) for p in args.tasks]
    if len(runs) == 1:
        summary = exp.summarize(runs[0])
        print(json.dumps(summary, indent=2, sort_keys=True) if args.json
              else format_summary(summary, args.alpha))
        return EXIT_OK
    result = []
    for m in ("ret", "mdd", "asr", "success_rate"):
        methods = {f"svr[{i}] {p}": _by_task(rows, "svr_" + m)
                   for i, (p, rows) in enumerate(zip(args.tasks, runs))}
        methods["bah"] = _by_task(runs[0], "bah_" + m)
        result.append(rank_comparison(methods, m, args.alpha))
    if args.json:
        print(json.dumps(result, indent=2, sort_keys=True))
        return EXIT_OK
    for entry in result:
        print(f"{entry['metric']}: n={entry['n']}")
        if entry["friedman"] is None:
            print("  not enough common tasks")
            continue
        for name, r in entry["mean_ranks"].items():
            print(f"  {name:<40} mean rank {r:.3f}")
        f = entry["friedman"]
        print(f"  Friedman chi2={f['statistic']:.3f} p={f['p']:.4g}")
        if "cd" in entry:
            print(f"  CD={entry['cd']:.3f} top group: {', '.join(entry['top_group'])}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pivotsvr", description="Turning-point prediction with epsilon-SVR.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_csv(p):
        p.add_argument("--csv", required=True, help="price file with date,close[,open] columns")

    def with_range(p):
        p.add_argument("--start", type=int, default=0, help="first index (0-based)")
        p.add_argument("--stop", type=int, help="one past the last index (default: end)")

    p = sub.add_parser("pivots", help="extract alternating pivots as date,kind,value")
    with_csv(p), with_range(p), _add_spec_args(p)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_pivots)

    p = sub.add_parser("oscillator", help="turning-point oscillator as date,gamma")
    with_csv(p), with_range(p), _add_spec_args(p)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_oscillator)

    def with_model_args(p):
        p.add_argument("--window", type=int, default=8, help="backward window length m")
        p.add_argument("--grid-c", type=_floats, default=list(DEFAULT_C))
        p.add_argument("--grid-sigma", type=_floats, default=list(DEFAULT_SIGMA))
        p.add_argument("--grid-eps", type=_floats, default=list(DEFAULT_EPSILON))
        p.add_argument("--threshold-step", type=float, default=0.01)

    p = sub.add_parser("train", help="grid-search a model on one train/validation split")
    with_csv(p), _add_spec_args(p), with_model_args(p)
    p.add_argument("--start", type=int, default=0, help="first training index")
    p.add_argument("--n-train", type=int, default=504)
    p.add_argument("--n-valid", type=int, default=60)
    p.add_argument("--model", required=True, help="model file; metadata goes to MODEL.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predicted oscillator as date,gamma_hat")
    with_csv(p), with_range(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("backtest", help="trade a segment with a trained model")
    with_csv(p), with_range(p)
    p.add_argument("--model", required=True)
    p.add_argument("--mdd-absolute", action="store_true",
                   help="report drawdown in wealth units instead of a fraction of the peak")
    p.add_argument("--out-dir", required=True, help="receives report.json and days.csv")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("experiment", help="run the multi-task experiment")
    p.add_argument("--config", help="JSON config; command-line flags override its keys")
    p.add_argument("--csv")
    p.add_argument("--criterion", choices=["degree", "impact", "momentum"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--lookahead", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--grid-c", type=_floats)
    p.add_argument("--grid-sigma", type=_floats)
    p.add_argument("--grid-eps", type=_floats)
    p.add_argument("--threshold-step", type=float)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-valid", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--n-tasks", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mdd-absolute", action="store_true")
    p.add_argument("--out-dir", help="artifact directory")
    p.add_argument("--threads", type=int, help="worker count (capped by PIVOTSVR_THREADS)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="summary table from experiment tasks.csv files")
    p.add_argument("tasks", nargs="+", help="tasks.csv; several files are rank-compared")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConvergenceError, SelectionError) as exc:
        print(f"pivotsvr: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DataError, OSError, IndexError) as exc:
        print(f"pivotsvr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"pivotsvr: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

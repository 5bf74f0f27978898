"""Command-line entry point: ingest, synth, correlate, train, backtest, report."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import forecast as fc
from .dataset import generate_synthetic
from .pipeline import (RunConfig, StageError, correlate, dataset_files, load_config,
                       load_dataset, parse_comparison_csv, report_text, run_files, stage,
                       train_evaluate, write_outputs)
from .regressors import MODEL_ORDER

log = logging.getLogger("catcoupon")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_UNDEFINED = 3


def _config(args, **extra):
    overrides = {
        "features": getattr(args, "features", None),
        "models": getattr(args, "models", None),
        "selection": getattr(args, "selection", None),
        "split": getattr(args, "split", None),
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
        "out": getattr(args, "out", None),
        "shuffle_folds": getattr(args, "shuffle_folds", None),
        "n_draws": getattr(args, "draws", None),
    }
    overrides.update(extra)
    with stage("config"):
        return load_config(args.config, overrides)


def cmd_ingest(args):
    cfg = _config(args, tranches=args.tranches, climate_dir=args.climate_dir,
                  strict=True if args.strict else None)
    if cfg.tranches is None:
        raise StageError("ingest", "no tranche file given (--tranches or config)")
    ds = load_dataset(cfg)
    with stage("write"):
        write_outputs(cfg.out, dataset_files(ds))
    print(f"ingested {len(ds)} tranches and {len(ds.climate)} climate series into {cfg.out}")
    return EXIT_OK


def cmd_synth(args):
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg.synthetic_seed
    n = args.n if args.n is not None else cfg.synthetic_n
    with stage("synth"):
        ds = generate_synthetic(seed, n)
    with stage("write"):
        files = dataset_files(ds)
        files["seeds.log"] = f"synthetic_seed={seed}\nn={n}\n"
        write_outputs(cfg.out, files)
    print(f"wrote synthetic dataset (seed={seed}, n={n}) to {cfg.out}")
    return EXIT_OK


def cmd_correlate(args):
    cfg = _config(args)
    ds = load_dataset(cfg) if cfg.tranches else _synthetic(cfg)
    with stage("correlate"):
        tables = correlate(ds, cfg)
    with stage("write"):
        files = {f"correlations/{name}.csv": t.to_csv() for name, t in tables.items()}
        files["correlations.csv"] = "index,lag,correlation\n" + "".join(
            t.to_csv().split("\n", 1)[1] for t in tables.values())
        write_outputs(cfg.out, files)
    undefined = {n: t.undefined for n, t in tables.items() if t.undefined}
    for name, t in tables.items():
        peak = t.peak_lag(absolute=True)
        shown = "undefined" if peak is None else f"{peak} (r={t.correlations[peak]:+.3f})"
        print(f"{name:<24} peak |r| at lag {shown}")
    if undefined:
        for name, lags in undefined.items():
            print(f"warning: {name}: correlation undefined at lags "
                  f"{', '.join(map(str, lags))} (zero variance)", file=sys.stderr)
        return EXIT_UNDEFINED
    return EXIT_OK


def _synthetic(cfg):
    with stage("synth"):
        return generate_synthetic(cfg.synthetic_seed, cfg.synthetic_n)


def cmd_train(args):
    cfg = _config(args)
    ds = load_dataset(cfg) if cfg.tranches else _synthetic(cfg)
    log.info("run seed %d, synthetic seed %s", cfg.seed,
             cfg.synthetic_seed if cfg.tranches is None else "n/a")
    run = train_evaluate(ds, cfg)
    with stage("write"):
        write_outputs(cfg.out, run_files(run))
    print(report_text(run.rmse_table()), end="")
    return EXIT_OK


def _read_actuals(path):
    values = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        cell = line.strip().split(",")[-1].strip()
        if not cell:
            continue
        try:
            values.append(float(cell))
        except ValueError:
            if values or i > 1:
                raise ValueError(f"actuals line {i}: {cell!r} is not a number") from None
    return np.array(values)


def cmd_backtest(args):
    with stage("backtest"):
        if (args.predictive is None) == (args.exceedances is None):
            raise ValueError("give exactly one of --predictive or --exceedances")
        if args.exceedances is not None:
            series = bt.parse_exceedances(Path(args.exceedances).read_text(encoding="utf-8"))
        else:
            pred = fc.parse_predictive_csv(Path(args.predictive).read_text(encoding="utf-8"))
            y = pred["y_true"]
            if args.actuals is not None:
                y = _read_actuals(args.actuals)
                if y.size != pred["p5"].size:
                    raise ValueError(f"row count mismatch: {pred['p5'].size} forecast rows "
                                     f"vs {y.size} actuals")
            series = bt.exceedances(y, pred["p5"])
        report = bt.backtest(series, p=args.level)
    if args.out is not None:
        with stage("write"):
            write_outputs(args.out, {"report.txt": report.to_text(),
                                     "report.csv": bt.report_csv({args.label: report})})
    print(report.summary(color=sys.stdout.isatty()), end="")
    return EXIT_OK


def cmd_report(args):
    run = Path(args.run)
    with stage("report"):
        table = parse_comparison_csv((run / "comparison.csv").read_text(encoding="utf-8"))
        reports = {}
        for f in sorted((run / "backtest").glob("*.txt")):
            kv = bt.parse_report_text(f.read_text(encoding="utf-8"))
            reports[f.stem.replace("_", "/", 1)] = bt.BacktestReport(
                int(kv["N"]), int(kv["x"]), *(float(kv[k]) for k in bt.REPORT_FIELDS[2:-1]),
                kv["basel_zone"])
        text = report_text(table, reports)
    if args.out is not None:
        with stage("write"):
            Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def _models(text):
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in names if m not in MODEL_ORDER]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown model(s) {', '.join(bad)}; choose from {', '.join(MODEL_ORDER)}")
    return names


def build_parser():
    p = argparse.ArgumentParser(prog="catcoupon", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required, help="output directory")

    sp = sub.add_parser("ingest", help="parse and validate tranche and climate files")
    common(sp)
    sp.add_argument("--tranches")
    sp.add_argument("--climate-dir")
    sp.add_argument("--strict", action="store_true")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("correlate", help="lagged correlations per climate series")
    common(sp)
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("train", help="tune, fit, evaluate and backtest models")
    common(sp)
    sp.add_argument("--features", type=lambda s: (s,), choices=[("benchmark",), ("extended",)],
                    metavar="benchmark|extended")
    sp.add_argument("--models", type=_models, help="comma-separated model list")
    sp.add_argument("--selection", choices=["elasticnet", "none"])
    sp.add_argument("--split", choices=["chrono", "random"])
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--draws", type=int, help="random-search draws per model")
    sp.add_argument("--shuffle-folds", type=int, metavar="SEED")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("backtest", help="VaR backtest of a predictive or exceedance file")
    sp.add_argument("--predictive")
    sp.add_argument("--actuals")
    sp.add_argument("--exceedances")
    sp.add_argument("--level", type=float, default=0.05)
    sp.add_argument("--label", default="model")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_backtest)

    sp = sub.add_parser("report", help="summarise a train run directory")
    sp.add_argument("run")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"catcoupon: error {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

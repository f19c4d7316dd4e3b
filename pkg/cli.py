#!/usr/bin/env python3
"""
Command-line entry point for the TKAN benchmark.

    python cli.py ingest     fetch symbols into the CSV cache and merge them (or --synthetic N)
    python cli.py prepare    scale and window the frame for every configured horizon
    python cli.py train      one (model, horizon, seed) run
    python cli.py benchmark  the full model × horizon × seed factorial
    python cli.py report     recompute aggregates from report.csv and print the tables
    python cli.py dashboard  open the Streamlit report viewer on an output directory

Exit codes: 0 success, 1 failure, 2 benchmark finished with failed runs.
"""

import argparse
import logging
import os
import subprocess
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from benchmark import (
    MODEL_KINDS,
    ExperimentConfig,
    RunSpec,
    aggregate_table,
    load_prepared,
    load_reference,
    render_table,
    run_benchmark,
    train_run,
)
from data import load_series_csv, synthetic_frame
from database import RunStore
from errors import TkanError
from klines import KlinesClient, fetch_frame, symbols_with_target
from utils import dump_yaml, setup_logging

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INCOMPLETE = 2
DEFAULT_CONFIG = "config.yaml"
REFERENCE_CSV = Path(__file__).resolve().parent / "reference_r2.csv"
RESULTS_ENV = "TKAN_RESULTS_DIR"


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _model_list(text: str) -> List[str]:
    models = [part.strip() for part in text.split(",") if part.strip()]
    unknown = [m for m in models if m not in MODEL_KINDS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown model(s) {unknown}; choose from {', '.join(MODEL_KINDS)}")
    return models


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG, help="YAML experiment config (default: %(default)s)")
    common.add_argument("--data-dir", help="directory holding the kline cache and frame.csv")
    common.add_argument("--out", help="output directory for reports, histories and checkpoints")
    common.add_argument("--seeds", type=_int_list, help="comma-separated seeds, e.g. 0,1,2")
    common.add_argument("--horizons", type=_int_list, help="comma-separated horizons, e.g. 1,3,6")
    common.add_argument("--model", type=_model_list, help=f"comma-separated models from {', '.join(MODEL_KINDS)}")
    common.add_argument("--workers", type=int, help="parallel runs")
    common.add_argument("--log-level", default="INFO", help="DEBUG shows every epoch (default: %(default)s)")
    common.add_argument("--quiet", action="store_true", help="hide progress bars")

    parser = argparse.ArgumentParser(prog="cli.py", description="TKAN forecasting benchmark")
    verbs = parser.add_subparsers(dest="verb", required=True)

    ingest = verbs.add_parser("ingest", parents=[common], help="fetch klines or write a synthetic frame")
    ingest.add_argument("--synthetic", type=int, metavar="N", help="write N synthetic hours instead of fetching")
    ingest.add_argument("--validate", action="store_true", help="only validate the existing frame CSV")

    verbs.add_parser("prepare", parents=[common], help="scale and window for every horizon")

    train = verbs.add_parser("train", parents=[common], help="one (model, horizon, seed) run")
    train.add_argument("--horizon", type=int, help="defaults to the first configured horizon")
    train.add_argument("--seed", type=int, help="defaults to the first configured seed")

    bench = verbs.add_parser("benchmark", parents=[common], help="run the full factorial")
    bench.add_argument("--resume", action="store_true", help="skip runs already stored as ok")

    report = verbs.add_parser("report", parents=[common], help="aggregate report.csv and print the tables")
    report.add_argument("--with-reference", action="store_true", help="show published values beside measured ones")

    dashboard = verbs.add_parser("dashboard", parents=[common], help="launch the Streamlit report viewer")
    dashboard.add_argument("--port", type=int, default=8501)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_yaml(args.config)
    overrides = {
        "seeds": args.seeds,
        "horizons": args.horizons,
        "models": args.model,
        "workers": args.workers,
        "output_dir": args.out,
    }
    if args.data_dir:
        overrides["data_dir"] = args.data_dir
        overrides["csv"] = str(Path(args.data_dir) / "frame.csv")
    return config.with_overrides(**overrides)


# ---------------------------------------------------------------- verbs

def cmd_ingest(config: ExperimentConfig, args: argparse.Namespace) -> int:
    csv_path = Path(config.data.csv)
    if args.validate:
        frame, report = load_series_csv(csv_path, config.data.target_column)
        report.log()
        logger.info("✅ %s: %d rows × %d columns, target %s", csv_path, len(frame), len(frame.columns), frame.target_column)
        return EXIT_OK
    if args.synthetic:
        names = symbols_with_target(config.data.symbols, config.data.target_column)[:2]
        frame = synthetic_frame(args.synthetic, seed=config.benchmark.seeds[0], names=names)
        frame.to_csv(csv_path)
        logger.info("✅ Wrote %d synthetic hours of %s to %s", len(frame), ", ".join(frame.columns), csv_path)
        return EXIT_OK
    client = KlinesClient(config.data.endpoint, config.data.data_dir)
    symbols = symbols_with_target(config.data.symbols, config.data.target_column)
    frame, report = fetch_frame(symbols, config.data.start, config.data.end, config.data.target_column,
                                client, progress=not args.quiet)
    report.log()
    frame.to_csv(csv_path)
    logger.info("✅ Merged frame written to %s (%d rows)", csv_path, len(frame))
    return EXIT_OK


def cmd_prepare(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out_dir = Path(config.benchmark.output_dir)
    for horizon in config.benchmark.horizons:
        prepared = load_prepared(config, horizon, out_dir)
        logger.info("✅ Horizon %d: X_train %s, X_test %s", horizon, prepared.X_train.shape, prepared.X_test.shape)
    return EXIT_OK


def cmd_train(config: ExperimentConfig, args: argparse.Namespace) -> int:
    horizon = args.horizon or config.benchmark.horizons[0]
    seed = args.seed if args.seed is not None else config.benchmark.seeds[0]
    spec = RunSpec(config.benchmark.models[0], horizon, seed)
    out_dir = Path(config.benchmark.output_dir)
    prepared = load_prepared(config, horizon, out_dir)
    logger.info("🚀 Training %s", spec.name)
    result, _, _ = train_run(config, spec, prepared, out_dir, progress=not args.quiet)
    print(f"R2={result.r2:.6f} RMSE={result.rmse:.6f} epochs={result.epochs} best_epoch={result.best_epoch}", flush=True)
    return EXIT_OK


def cmd_benchmark(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out_dir = Path(config.benchmark.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_yaml(config.to_dict(), out_dir / "config.yaml")
    store = RunStore(str(out_dir / "runs.db"))
    report = run_benchmark(config, store, resume=args.resume, progress=not args.quiet)
    render_table(report.aggregate_frame(), config.benchmark.models)
    return EXIT_OK if report.complete else EXIT_INCOMPLETE


def cmd_report(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out_dir = Path(config.benchmark.output_dir)
    report_csv = out_dir / "report.csv"
    if not report_csv.exists():
        logger.error("❌ No report.csv in %s; run the benchmark first", out_dir)
        return EXIT_FAILURE
    per_seed = pd.read_csv(report_csv)
    models = [m for m in config.benchmark.models if m in set(per_seed["model"])] or list(per_seed["model"].unique())
    agg = aggregate_table(per_seed, models)
    agg.to_csv(out_dir / "report_agg.csv", index=False, float_format="%.17g")
    reference = load_reference(REFERENCE_CSV) if args.with_reference else None
    render_table(agg, models, reference)
    return EXIT_INCOMPLETE if (per_seed["status"] != "ok").any() else EXIT_OK


def cmd_dashboard(config: ExperimentConfig, args: argparse.Namespace) -> int:
    app_path = Path(__file__).resolve().parent / "app.py"
    out_dir = Path(config.benchmark.output_dir).resolve()
    cmd = [
        sys.executable, "-m", "streamlit", "run",
        str(app_path),
        "--server.port", str(args.port),
        "--server.headless", "true",
    ]
    env = dict(os.environ, **{RESULTS_ENV: str(out_dir)})
    print(f"🚀 Starting report viewer on http://localhost:{args.port} for {out_dir}", flush=True)
    try:
        return subprocess.call(cmd, env=env)
    except KeyboardInterrupt:
        print("\n🛑 Report viewer stopped", flush=True)
        return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "benchmark": cmd_benchmark,
    "report": cmd_report,
    "dashboard": cmd_dashboard,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        log_file = Path(config.benchmark.output_dir) / "benchmark.log" if args.verb in ("train", "benchmark") else None
        setup_logging(args.log_level, log_file)
        return COMMANDS[args.verb](config, args)
    except TkanError as e:
        logging.getLogger("cli").error("❌ %s", e)
        return EXIT_FAILURE
    except (OSError, ValueError) as e:
        logging.getLogger("cli").error("❌ %s: %s", type(e).__name__, e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

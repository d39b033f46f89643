"""Command-line entry points: ingest, run, report, predict."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .data import read_canonical
from .errors import DeepDeffError
from .features import build_samples
from .harness import (
    ExperimentConfig,
    emit_plot_data,
    emit_report,
    format_text_table,
    ingest_to_cache,
    load_results,
    run_experiment,
)
from .model import load_weights


def _add_common(parser):
    parser.add_argument("--out", help="output directory (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepdeff",
        description="Short-term load forecasting experiments with derived-feature fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw dataset files into the canonical cache")
    p.add_argument("--config", required=True, help="experiment config JSON")
    _add_common(p)

    p = sub.add_parser("run", help="run the method x time-steps experiment matrix")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--jobs", type=int, help="entity worker count (overrides the config)")
    p.add_argument(
        "--format",
        choices=["csv", "json", "table"],
        action="append",
        help="report format(s); default: csv and json",
    )
    _add_common(p)

    p = sub.add_parser("report", help="re-render a saved results.json")
    p.add_argument("--results", required=True, help="path to results.json")
    p.add_argument("--format", choices=["csv", "json", "table"], default="table")
    _add_common(p)

    p = sub.add_parser("predict", help="predict one entity's series with saved weights")
    p.add_argument("--weights", required=True, help="weights file from a run")
    p.add_argument("--data", required=True, help="canonical-cache CSV for the entity")
    p.add_argument("--entity", default="entity", help="entity label for the output file")
    _add_common(p)

    return parser


def cmd_ingest(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    out_dir = args.out or config.out_dir or "."
    for path in ingest_to_cache(config, out_dir):
        print(f"wrote {path}")
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.jobs is not None:
        config = replace(config, jobs=args.jobs)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    out_dir = config.out_dir or "."
    config = replace(config, out_dir=out_dir)

    table = run_experiment(config)
    formats = tuple(args.format) if args.format else ("csv", "json")
    for path in emit_report(table, out_dir, formats=formats):
        print(f"wrote {path}")
    if "table" in formats:
        print(format_text_table(table), end="")
    return 0


def cmd_report(args) -> int:
    table = load_results(args.results)
    if args.format == "table" and args.out is None:
        print(format_text_table(table), end="")
        return 0
    out_dir = args.out or "."
    for path in emit_report(table, out_dir, formats=(args.format,)):
        print(f"wrote {path}")
    return 0


def cmd_predict(args) -> int:
    model = load_weights(args.weights)
    series = read_canonical(args.data, source_id=args.entity)
    samples = build_samples(series, model.timesteps)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"predictions_{args.entity}.csv")
    emit_plot_data(model, samples, path)
    print(f"wrote {path} ({len(samples)} points)")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "run": cmd_run,
    "report": cmd_report,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except DeepDeffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

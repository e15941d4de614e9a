#!/usr/bin/env python3
"""
RF map toolkit: simulate a room, sample it, complete the sparse map,
train the GAN augmenter and benchmark fingerprint localization.

    python rfmap_app.py simulate --config data/scenario_default.json --out out/truth.csv --plot
    python rfmap_app.py sample   --config data/scenario_default.json --truth out/truth.csv --out out/meas.csv
    python rfmap_app.py impute   --config data/scenario_default.json --input out/meas.csv --method mice --out out/grid.csv
    python rfmap_app.py bench    --config data/scenario_default.json --out out/bench
"""

import argparse
import sys

from modules import commands
from modules.interpolation import METHODS
from modules.utilis import DataError, RFMapError, format_diagnostic, setup_logging

DEFAULT_CONFIG = "data/scenario_default.json"


def build_parser():
    parser = argparse.ArgumentParser(prog="rfmap_app", description="Indoor RF map completion and localization bench")
    parser.add_argument("--verbose", "-v", action="store_true", help="DEBUG logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, out_help):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=DEFAULT_CONFIG, help="scenario JSON")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        return p

    p = add("simulate", "ground-truth RSS grid", "grid CSV path")
    p.add_argument("--plot", action="store_true", help="also write <out stem>.svg heatmaps")

    p = add("sample", "simulated measurement campaign", "measurement CSV path")
    p.add_argument("--truth", default=None, help="ground-truth CSV (simulated from the config when omitted)")

    p = add("impute", "complete the sparse map", "completed grid CSV path")
    p.add_argument("--input", required=True, help="measurement CSV")
    p.add_argument("--method", choices=METHODS, default="mice")
    p.add_argument("--dump-layers", action="store_true", help="also write one <out stem>_<ap_id>.csv per AP")

    p = add("train-gan", "train the GAN augmenter", "model JSON path")
    p.add_argument("--input", required=True, help="completed grid CSV")
    p.add_argument("--log", required=True, help="training log CSV path")

    p = add("bench", "localization benchmark", "output directory")
    p.add_argument("--runs", type=int, default=None, help="override bench.runs")

    add("compare", "imputer accuracy against the ground truth", "output directory")

    p = sub.add_parser("plot", help="heatmap of a completed grid CSV")
    p.add_argument("--config", default=DEFAULT_CONFIG)
    p.add_argument("--input", required=True, help="completed grid CSV")
    p.add_argument("--out", required=True, help="SVG path")
    return parser


def dispatch(args):
    if args.command == "simulate":
        return commands.cmd_simulate(args.config, args.out, seed=args.seed, plot=args.plot)
    if args.command == "sample":
        return commands.cmd_sample(args.config, args.truth, args.out, seed=args.seed)
    if args.command == "impute":
        return commands.cmd_impute(args.config, args.input, args.out, args.method, seed=args.seed,
                                   dump_layers=args.dump_layers)
    if args.command == "train-gan":
        return commands.cmd_train_gan(args.config, args.input, args.out, args.log, seed=args.seed)
    if args.command == "bench":
        return commands.cmd_bench(args.config, args.out, seed=args.seed, runs=args.runs)
    if args.command == "compare":
        return commands.cmd_compare(args.config, args.out, seed=args.seed)
    return commands.cmd_plot(args.config, args.input, args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        summary = dispatch(args)
    except RFMapError as e:
        print(format_diagnostic(e), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        error = DataError(f"I/O error: {e}")
        print(format_diagnostic(error), file=sys.stderr)
        return error.exit_code
    print(f"✅ {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

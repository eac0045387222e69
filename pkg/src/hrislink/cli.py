"""Command-line entry point.

Subcommands: train | evaluate | sweep-k | bench-runtime | plot.
Exit codes: 0 success, 2 config error, 3 numeric failure, 4 missing or
malformed artifact.
"""

import argparse
import sys

from . import numerics
from .bench import (ConfigError, MissingCheckpoint, PlotDataError, cmd_plot,
                    cmd_bench_runtime, cmd_evaluate, cmd_sweep_k, cmd_train,
                    load_config)
from .ppo import NonFiniteGradient

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_MISSING = 4

_NUMERIC_ERRORS = (numerics.NotHermitian, numerics.NotPositiveDefinite,
                   numerics.ConvergenceFailure, NonFiniteGradient,
                   FloatingPointError)


def _add_common(sub):
    sub.add_argument("--config", default=None, help="JSON config file")
    sub.add_argument("--seed", type=int, default=None, help="override seed")
    sub.add_argument("--out", default=None, help="override output directory")
    sub.add_argument("--profile", choices=("desk", "paper"), default="desk",
                     help="baked-in parameter profile")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrislink",
        description="HRIS-assisted MIMO downlink experiments")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("train", "train a PPO agent; emits reward CSV + checkpoint"),
            ("evaluate", "score DRL/AO/random on held-out channels"),
            ("sweep-k", "mean SE versus number of active elements"),
            ("bench-runtime", "wall-time of DRL inference vs AO solve")):
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
    plot = subs.add_parser("plot", help="render result CSVs to SVG charts")
    plot.add_argument("csvs", nargs="+", help="result CSV files")
    plot.add_argument("--out", default=".", help="output directory")
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.out is not None:
        out["output_dir"] = args.out
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            written = cmd_plot(args.csvs, args.out)
            for path in written.values():
                print(path)
            return EXIT_OK
        exp = load_config(args.config, profile=args.profile,
                          overrides=_overrides(args))
        exp.experiment = {"train": "train", "evaluate": "evaluate",
                          "sweep-k": "sweep-k",
                          "bench-runtime": "bench-runtime"}[args.command]
        if args.command == "train":
            arts = cmd_train(exp)
        elif args.command == "evaluate":
            arts = cmd_evaluate(exp)
        elif args.command == "sweep-k":
            arts = cmd_sweep_k(exp)
        else:
            arts = cmd_bench_runtime(exp)
        for key in ("reward_csv", "checkpoint", "se_csv", "runtime_csv"):
            if key in arts:
                print(arts[key])
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MissingCheckpoint, PlotDataError, FileNotFoundError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())

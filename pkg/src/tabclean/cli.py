"""Command-line entry point.

Verbs:
  run <config>        validate a config, run the sweep, write results + summary
  validate <config>   check a config and echo the parsed sweep
  synth               emit a synthetic dataset (data.csv) plus its ground truth
  report <results>    regenerate summary.md from an existing results.csv

Exit codes: 0 success, 1 config/schema error, 2 total run failure (every
cell errored).
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import BenchError, run_experiment, validate_config, write_summary
from .data import save_csv, synth_generate


def _cmd_run(args) -> int:
    try:
        config = validate_config(args.config)
    except BenchError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 1
    result = run_experiment(config)
    print(f"wrote {result.results_path} ({result.n_cells} runs, {result.n_errors} errored)")
    print(f"wrote {result.summary_path}")
    if result.n_errors == result.n_cells:
        print("every cell failed", file=sys.stderr)
        return 2
    return 0


def _cmd_validate(args) -> int:
    try:
        config = validate_config(args.config)
    except BenchError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 1
    print(f"ok: experiment {config.name!r} ({config.kind})")
    print(f"  dataset: {config.dataset.name} ({config.dataset.source})")
    print(f"  methods: {', '.join(m.name for m in config.methods)}")
    print(f"  rates: {', '.join(f'{r:g}' for r in config.rates)}")
    print(f"  seeds: {', '.join(str(s) for s in config.seeds)}")
    print(f"  output: {config.output_dir} (workers {config.workers})")
    return 0


def _cmd_synth(args) -> int:
    try:
        ds, truth = synth_generate(
            args.rows,
            args.continuous,
            args.categorical,
            missing_rate=args.missing_rate,
            seed=args.seed,
        )
    except ValueError as exc:
        print(f"synth error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "data.csv")
    truth_path = os.path.join(args.out, "truth.csv")
    save_csv(ds, data_path)
    save_csv(truth, truth_path)
    print(f"wrote {data_path}")
    print(f"wrote {truth_path}")
    return 0


def _cmd_report(args) -> int:
    try:
        out = write_summary(args.results, args.out)
    except BenchError as exc:
        for msg in exc.errors:
            print(f"report error: {msg}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tabclean",
        description="Benchmark runner for imputation and noise correction on tabular data.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config", help="path to an experiment config file")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check an experiment config")
    p.add_argument("config", help="path to an experiment config file")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("synth", help="emit a synthetic dataset and its ground truth")
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("--continuous", type=int, default=10)
    p.add_argument("--categorical", type=int, default=0)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="regenerate summary.md from results.csv")
    p.add_argument("results", help="path to a results.csv file")
    p.add_argument("--out", default=None, help="summary output path")
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

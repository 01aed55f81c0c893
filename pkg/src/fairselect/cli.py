"""Command-line interface: synth, run, sweep, report.

Every subcommand is driven by a JSON config file; a handful of flags
override individual fields. Failures print a machine-readable error record
to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import FairselectError
from .experiment import canonical_mode, cmd_report, cmd_run, cmd_sweep, cmd_synth, parse_config


def _add_config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--output-dir", help="override output directory")
    parser.add_argument("--seed", type=int, help="override master seed")
    parser.add_argument("--mode", help="override pipeline mode (M, T, or ERM)")
    parser.add_argument("--nu", type=float, help="override variance hyperparameter")
    parser.add_argument("--n-select", type=float, help="override selection fraction")
    parser.add_argument("--trials", type=int, help="override trial count")
    parser.add_argument("--rho-a", type=float, help="override privileged-group flip rate")
    parser.add_argument("--rho-b", type=float, help="override disadvantaged-group flip rate")
    parser.add_argument("--epochs", type=int, help="override training epochs")


def _load_config(args: argparse.Namespace):
    raw = {}
    if args.config is not None:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not raw:
        raw = {"dataset": {"synthetic": {}}}
    overrides = {
        "output_dir": args.output_dir,
        "seed": args.seed,
        "coteach.mode": canonical_mode(args.mode) if args.mode is not None else None,
        "coteach.nu": args.nu,
        "coteach.n_select": args.n_select,
        "split.trial_count": args.trials,
        "bias.rho_a": args.rho_a,
        "bias.rho_b": args.rho_b,
        "coteach.train.epochs": args.epochs,
        "dataset.synthetic.n": getattr(args, "n", None),
        "dataset.synthetic.seed": getattr(args, "dataset_seed", None),
    }
    return parse_config(raw, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairselect",
        description="Remove group-dependent label bias by co-trained confident selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate the synthetic dataset as CSV")
    _add_config_arguments(synth)
    synth.add_argument("--n", type=int, help="number of rows")
    synth.add_argument("--dataset-seed", type=int, help="generator seed")
    synth.add_argument("--out", type=Path, required=True, help="output CSV path")

    run = sub.add_parser("run", help="run trials and write reports")
    _add_config_arguments(run)

    sweep = sub.add_parser("sweep", help="run the (nu, n_select) grid")
    _add_config_arguments(sweep)

    report = sub.add_parser("report", help="re-aggregate trial outputs in a directory")
    report.add_argument("run_dir", type=Path, help="directory containing trial_*.json files")
    report.add_argument("--out", type=Path, help="directory for report.json/report.txt")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            path = cmd_synth(_load_config(args), args.out)
            print(path)
        elif args.command == "run":
            config = _load_config(args)
            cmd_run(config)
            print((Path(config.output_dir) / "aggregate.txt").read_text(), end="")
        elif args.command == "sweep":
            config = _load_config(args)
            cmd_sweep(config)
            print((Path(config.output_dir) / "sweep.txt").read_text(), end="")
        elif args.command == "report":
            report_doc = cmd_report(args.run_dir, args.out)
            print(json.dumps(report_doc, indent=2, sort_keys=True))
        return 0
    except FairselectError as exc:
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

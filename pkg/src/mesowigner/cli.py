"""Command line entry point: one subcommand per experiment."""
from __future__ import annotations

import argparse
import json
import sys

from .config import Experiment, load_config
from .errors import ConfigurationError, ContractViolation, DomainError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mesowigner", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for exp in Experiment:
        p = sub.add_parser(exp.value, help=f"run the {exp.value} experiment")
        p.add_argument("--config", metavar="PATH", help="TOML configuration file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                       help="override a (dotted) configuration key; repeatable")
        p.add_argument("--output", metavar="DIR", help="output directory")
        p.add_argument("--workers", metavar="K", type=int, help="worker processes (default: all cores)")
        p.add_argument("--seed", metavar="S", type=int, help="ensemble master seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .harness import run

    try:
        cfg = load_config(args.config, args.overrides, args.experiment, args.output, args.workers, args.seed)
        manifest = run(cfg)
    except (ConfigurationError, DomainError, ContractViolation) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        report = {k: repr(v) for k, v in getattr(exc, "report", {}).items()}
        print(f"numerical error: {exc}", file=sys.stderr)
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps({"output_dir": cfg.output_dir, "files": sorted(manifest["files"])}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Run one experiment from a TOML config, e.g.

    python scripts/run_experiment.py configs/resolvent_clt.toml --set num_samples=256 --workers 4
"""
import argparse
import json

from mesowigner.config import load_config
from mesowigner.harness import run


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE")
    p.add_argument("--output")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    args = p.parse_args()
    cfg = load_config(args.config, args.overrides, output=args.output, workers=args.workers, seed=args.seed)
    manifest = run(cfg)
    print(json.dumps({"output_dir": cfg.output_dir, "files": manifest["files"]}, indent=2))


if __name__ == "__main__":
    main()

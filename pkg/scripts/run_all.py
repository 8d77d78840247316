"""Run every config in configs/ in turn; outputs land under runs/ (see each config's output_dir).

The full-size Monte Carlo configs take tens of minutes on a single core.
"""
import argparse
import sys
import time
from pathlib import Path

from mesowigner.config import load_config
from mesowigner.errors import MesoWignerError
from mesowigner.harness import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("names", nargs="*", help="config stems to run (default: all)")
    p.add_argument("--workers", type=int)
    args = p.parse_args()
    paths = sorted(CONFIGS.glob("*.toml"))
    if args.names:
        paths = [q for q in paths if q.stem in args.names]
    failed = 0
    for path in paths:
        t0 = time.time()
        try:
            cfg = load_config(str(path), workers=args.workers)
            run(cfg)
            print(f"{path.stem:24s} ok      {time.time() - t0:8.1f} s  -> {cfg.output_dir}")
        except MesoWignerError as exc:
            failed += 1
            print(f"{path.stem:24s} FAILED  {exc}")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()

"""Write plot-ready CSV files from a run's summary.json.

    python scripts/plot_data.py runs/resolvent_clt histogram_vs_gaussian covariance_heatmap
    python scripts/plot_data.py runs/bias_rate rate_loglog
"""
import argparse
from pathlib import Path

from mesowigner.harness import PLOT_KINDS, emit_plot_data


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("run_dir")
    p.add_argument("kinds", nargs="+", choices=PLOT_KINDS)
    args = p.parse_args()
    for kind in args.kinds:
        print(emit_plot_data(Path(args.run_dir) / "summary.json", kind))


if __name__ == "__main__":
    main()

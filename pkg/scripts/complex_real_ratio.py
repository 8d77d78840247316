"""Complex-over-real ratio of E|Y(b)|^2 and Var Z(f) from two resolvent_clt runs.

    python scripts/complex_real_ratio.py runs/resolvent_clt runs/resolvent_clt_complex
"""
import argparse
import json
import math
from pathlib import Path


def load(run_dir):
    return json.loads((Path(run_dir) / "summary.json").read_text())


def ratio(a, sa, b, sb):
    r = b / a
    return r, abs(r) * math.hypot(sa / a, sb / b)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("real_run")
    p.add_argument("complex_run")
    args = p.parse_args()
    real, cplx = load(args.real_run), load(args.complex_run)
    y = [s["results"]["cov_empirical"][0][0][0] for s in (real, cplx)]
    ys = [s["errors_bars"]["cov_empirical"][0][0][0] for s in (real, cplx)]
    r, se = ratio(y[0], ys[0], y[1], ys[1])
    print(f"E|Y(b0)|^2  real {y[0]:.5f}  complex {y[1]:.5f}  ratio {r:.4f} +- {se:.4f}")
    if "linstat" in real["results"] and "linstat" in cplx["results"]:
        v = [s["results"]["linstat"]["variance"][0] for s in (real, cplx)]
        vs = [s["errors_bars"]["linstat"]["variance"][0] for s in (real, cplx)]
        r, se = ratio(v[0], vs[0], v[1], vs[1])
        print(f"Var Z(f0)   real {v[0]:.5f}  complex {v[1]:.5f}  ratio {r:.4f} +- {se:.4f}")


if __name__ == "__main__":
    main()

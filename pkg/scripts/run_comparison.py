"""ILPR against the DIP and kernel baselines on one environment.

Synthetic mode (default) uses the beta = 2 unknown-utility environment.  With
``--products`` the fixture CSV is calibrated first and every usable product is
run as a semi-real environment.

    python3 scripts/run_comparison.py --trials 50 --horizon 20000
    python3 scripts/run_comparison.py --products fixtures/products.csv --trials 10 --horizon 5000
"""

import argparse
import json
import os
import sys

from pricelab.cli import main as cli_main


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/compare")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--horizon", type=int, default=20000)
    ap.add_argument("--beta", type=float, default=2.0)
    ap.add_argument("--products", help="product CSV; enables the semi-real comparison")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--parallelism", type=int, default=1)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    a = parse_args(argv)
    common = ["--trials", str(a.trials), "--horizons", str(a.horizon), "--seed", str(a.seed),
              "--parallelism", str(a.parallelism)]
    extra = []
    if a.products:
        models = os.path.join(a.out, "calibration")
        code = cli_main(["calibrate", "--input", a.products, "--out", models])
        if code:
            return code
        extra = ["--input", os.path.join(models, "models")]
    code = cli_main(["compare", "--policy", "ilpr,dip,kernel", "--beta", str(a.beta), "--out", a.out]
                    + common + extra)
    with open(os.path.join(a.out, "summary.json")) as fh:
        s = json.load(fh)
    if a.products:
        for pid, means in s["per_product"].items():
            print(pid, " ".join(f"{p}={v:.1f}" for p, v in means.items()))
    else:
        for p, v in s["mean_final_regret"].items():
            print(f"{p:7s} mean final regret {v:.1f}")
        for k, d in s["differences"].items():
            print(f"{k}: diff={d['diff']:.1f} se={d['se']:.1f} beyond 2se={d['margin_over_2se']}")
    return code


if __name__ == "__main__":
    sys.exit(main())

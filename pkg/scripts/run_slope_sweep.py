"""Regret-exponent sweep for ILPR with known and unknown utility.

Runs one independent trial per (beta, horizon, replicate) and prints the log-log
slope of mean cumulative regret with its cluster-bootstrap CI next to the
theoretical exponent.  Outputs land in ``<out>/known`` and ``<out>/unknown``.

    python3 scripts/run_slope_sweep.py --trials 50 --out out/slopes
    python3 scripts/run_slope_sweep.py --trials 5 --horizons 1000,2000,4000   # quick look
"""

import argparse
import csv
import os
import sys

from pricelab.cli import main as cli_main


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/slopes")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--horizons", default="2000,4000,8000,16000,32000")
    ap.add_argument("--beta", default="2.0,2.5")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--parallelism", type=int, default=1)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    a = parse_args(argv)
    status = 0
    for label, known in (("known", "true"), ("unknown", "false")):
        out = os.path.join(a.out, label)
        code = cli_main(["sweep", "--policy", "ilpr", "--known-utility", known, "--beta", a.beta,
                         "--horizons", a.horizons, "--trials", str(a.trials), "--seed", str(a.seed),
                         "--parallelism", str(a.parallelism), "--out", out])
        status = max(status, code)
        with open(os.path.join(out, "slopes.csv"), newline="") as fh:
            for row in csv.DictReader(fh):
                print(f"{label:8s} beta={row['beta']:>4s} slope={float(row['slope_hat']):.3f} "
                      f"CI=[{float(row['ci_lo']):.3f}, {float(row['ci_hi']):.3f}] theory={float(row['theory']):.3f}")
    return status


if __name__ == "__main__":
    sys.exit(main())

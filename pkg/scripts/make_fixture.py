"""Write the synthetic product-sales fixture used by the calibration tests and the CLI demo.

Every product follows the single-index model ``P(D=1) = 1 - F(p - m(x))`` with a
logistic ``F``.  A few products sit exactly on the screening thresholds.

    python3 scripts/make_fixture.py [--out fixtures/products.csv] [--seed 7]
"""

import argparse
import csv
import datetime as dt

import numpy as np

FIELDS = ("product_id", "date", "price", "units_ordered", "weekday", "competitor_max_price",
          "competitor_min_price", "stock_level")

# (product_id, rows, base utility, logistic scale, price shift) ; shift moves the purchase rate
PRODUCTS = [
    ("P01", 420, 20.0, 1.5, 0.0),
    ("P02", 520, 35.0, 2.5, 0.0),
    ("P03", 361, 12.0, 1.0, 0.5),
    ("P04", 301, 50.0, 3.0, -1.0),  # just above the row threshold
    ("P05", 300, 25.0, 1.5, 0.0),  # exactly 300 rows: screened out
    ("P06", 299, 18.0, 1.2, 0.0),  # too few rows
    ("P07", 400, 30.0, 1.0, -12.0),  # almost always bought
    ("P08", 400, 30.0, 1.0, 12.0),  # almost never bought
]


def product_rows(pid, n, base, scale, shift, rng):
    start = dt.date(2023, 1, 2)
    weekday = np.arange(n) % 7
    stock = rng.uniform(10, 100, n).round(1)
    comp_max = (base * rng.uniform(1.05, 1.35, n)).round(2)
    comp_min = (base * rng.uniform(0.70, 0.95, n)).round(2)
    wd_effect = np.array([0.0, 0.2, 0.1, 0.0, 0.3, 0.8, 0.6])[weekday] * scale
    m = 0.25 * base + 0.25 * comp_max + 0.35 * comp_min + 0.01 * stock + wd_effect
    price = np.maximum(m + shift + rng.uniform(-3, 3, n) * scale, 0.5).round(2)
    u = price - m
    buy = rng.random(n) < 1.0 / (1.0 + np.exp(u / scale))
    units = np.where(buy, 1 + rng.poisson(1.5, n), 0)
    return [
        (pid, (start + dt.timedelta(days=int(i))).isoformat(), f"{price[i]:.2f}", int(units[i]), int(weekday[i]),
         f"{comp_max[i]:.2f}", f"{comp_min[i]:.2f}", f"{stock[i]:.1f}")
        for i in range(n)
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="fixtures/products.csv")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for spec in PRODUCTS:
            w.writerows(product_rows(*spec, rng))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

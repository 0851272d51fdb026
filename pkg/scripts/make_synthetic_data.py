#!/usr/bin/env python3
"""Regenerate the bundled synthetic daily series.

Ten years of weekday closes (2,517 rows) from a seeded geometric
Brownian path with an equity-index-like drift and volatility, so that
five-year episode windows are sampleable everywhere in the file.
"""

import argparse
from datetime import date
from pathlib import Path

from taxtrader.market_data import synthetic_gbm, write_csv

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "data" / "synthetic_daily.csv"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    parser.add_argument("--seed", type=int, default=20081113)
    parser.add_argument("--n-days", type=int, default=2517)
    parser.add_argument("--s0", type=float, default=90.0)
    parser.add_argument("--mu", type=float, default=0.115)
    parser.add_argument("--sigma", type=float, default=0.19)
    args = parser.parse_args()

    series = synthetic_gbm(
        seed=args.seed,
        n_days=args.n_days,
        s0=args.s0,
        mu=args.mu,
        sigma=args.sigma,
        start=date(2008, 11, 13),
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, args.out)
    print(f"wrote {len(series)} rows to {args.out}")


if __name__ == "__main__":
    main()

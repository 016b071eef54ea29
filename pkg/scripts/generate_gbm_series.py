#!/usr/bin/env python
"""
Write a synthetic daily price series (geometric Brownian motion) as a date,close CSV.

Used to exercise the calibration commands without market data:

    python scripts/generate_gbm_series.py --out prices.csv --drift 0.08 --vol 0.2 --years 10
"""
import argparse
import logging
from pathlib import Path

from quadhedge.app.core.config import get_settings
from quadhedge.app.services.calibration import generate_gbm_series

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger("generate_gbm_series")


def main() -> None:
    settings = get_settings()
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--drift", type=float, default=0.08)
    parser.add_argument("--vol", type=float, default=0.2)
    parser.add_argument("--spot", type=float, default=100.0)
    parser.add_argument("--years", type=float, default=10.0)
    parser.add_argument("--start", default="2015-01-02")
    parser.add_argument("--seed", type=int, default=settings.default_seed)
    args = parser.parse_args()

    n_days = int(round(args.years * settings.trading_days)) + 1
    series = generate_gbm_series(
        args.drift, args.vol, args.spot, n_days, args.seed, start=args.start, trading_days=settings.trading_days
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    series.to_frame().to_csv(args.out, index=False, float_format=settings.float_format, lineterminator="\n")
    logger.info("Wrote %s closes to %s", len(series), args.out)


if __name__ == "__main__":
    main()

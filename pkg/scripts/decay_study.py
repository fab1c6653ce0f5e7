#!/usr/bin/env python3
"""Sweep gain and step size on the continuum oracle and fit decay rates.

For each (K_p, dt) pair the macroscopic loop runs for one time unit and
the log of the error norm is fitted against time.  Rows go to a CSV:

    K_p, dt, fitted_rate, rate_rel_dev, final_ratio, ratio_rel_dev

where the deviations compare against the ideal rate -K_p and the ideal
ratio exp(-K_p * T).

    python3 scripts/decay_study.py -o out/decay.csv
    python3 scripts/decay_study.py --gains 1 5 20 --dts 1e-3 5e-4 --grid 128
"""

import argparse
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

from cswarm.config import preset_config
from cswarm.harness import run_oracle


def fit_row(K_p: float, dt: float, grid: int, duration: float, scheme: str):
    cfg = preset_config(
        "theorem1",
        overrides=(
            ("gains.K_p", K_p),
            ("dt", dt),
            ("grid_cells", grid),
            ("duration", duration),
        ),
    )
    times, errors = run_oracle(cfg, scheme=scheme)
    rate = float(np.polyfit(times, np.log(errors), 1)[0])
    ratio = float(errors[-1] / errors[0])
    ideal = math.exp(-K_p * duration)
    return (
        K_p,
        dt,
        rate,
        abs(rate + K_p) / K_p,
        ratio,
        abs(ratio - ideal) / ideal,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--gains", type=float, nargs="+", default=[1.0, 2.0, 5.0, 10.0])
    parser.add_argument("--dts", type=float, nargs="+", default=[1e-3])
    parser.add_argument("--grid", type=int, default=64)
    parser.add_argument("--duration", type=float, default=1.0)
    parser.add_argument("--scheme", choices=["euler", "midpoint"], default="euler")
    parser.add_argument("-o", "--out", type=Path, default=Path("out/decay.csv"))
    args = parser.parse_args(argv)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    header = ("K_p", "dt", "fitted_rate", "rate_rel_dev", "final_ratio", "ratio_rel_dev")
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for K_p in args.gains:
            for dt in args.dts:
                t0 = time.perf_counter()
                row = fit_row(K_p, dt, args.grid, args.duration, args.scheme)
                writer.writerow([f"{v:.10g}" for v in row])
                print(
                    f"K_p={K_p:g} dt={dt:g}: rate {row[2]:.4f} "
                    f"(dev {row[3]:.2%}), ratio dev {row[5]:.2%}, "
                    f"{time.perf_counter() - t0:.1f}s",
                    flush=True,
                )
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

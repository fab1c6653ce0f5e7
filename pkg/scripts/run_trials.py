#!/usr/bin/env python3
"""Run the desk-scale scenario presets and collect their artifacts.

Each trial writes trace.csv, density/target snapshots, and a config echo
into its own subdirectory, then a summary table goes to stdout.

    python3 scripts/run_trials.py -o out/trials
    python3 scripts/run_trials.py -o out/quick --set duration=2.0 monomodal-regulation
"""

import argparse
import sys
import time
from pathlib import Path

import yaml

from cswarm.config import PRESETS, preset_config
from cswarm.harness import run_scenario

DEFAULT_TRIALS = (
    "monomodal-regulation",
    "multimodal-regulation",
    "monomodal-tracking",
    "multimodal-tracking",
    "mixed-monomodal",
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("presets", nargs="*", default=list(DEFAULT_TRIALS))
    parser.add_argument("-o", "--out", type=Path, default=Path("out/trials"))
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override applied to every trial",
    )
    args = parser.parse_args(argv)

    for name in args.presets:
        if name not in PRESETS:
            parser.error(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    overrides = []
    for text in args.overrides:
        if "=" not in text:
            parser.error(f"expected KEY=VALUE, got {text!r}")
        key, _, value = text.partition("=")
        overrides.append((key.strip(), yaml.safe_load(value)))

    rows = []
    for name in args.presets:
        cfg = preset_config(name, overrides=overrides)
        t0 = time.perf_counter()
        result = run_scenario(cfg, out_dir=args.out / name)
        elapsed = time.perf_counter() - t0
        trace = result.trace
        rows.append(
            (
                name,
                float(trace.e_bar[-1]),
                float(trace.kl[-1]),
                elapsed,
                str(result.output_dir),
            )
        )
        print(f"{name}: done in {elapsed:.1f}s", flush=True)

    print()
    print(f"{'trial':<24}{'final E%':>10}{'final KL':>10}{'wall s':>9}  artifacts")
    for name, e_bar, kl, elapsed, where in rows:
        print(f"{name:<24}{e_bar:>10.2f}{kl:>10.4f}{elapsed:>9.1f}  {where}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

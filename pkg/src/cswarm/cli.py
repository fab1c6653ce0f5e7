"""Command-line entry points.

Subcommands:
  run       run a scenario from a config file
  preset    run a built-in scenario by name
  oracle    integrate the continuum model and write the decay curve
  serve     run a scenario as a station that waits for remote robots
  robot     run one simulated robot client against a station
  validate  check a config file and exit
  presets   list the built-in scenario names

Every subcommand exits 0 on success and 1 with a one-line diagnostic on
failure; argparse handles usage errors with exit code 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from .config import (
    PRESETS,
    ConfigError,
    apply_override,
    config_from_dict,
    preset_dict,
)
from .harness import initial_layout, run_oracle, run_scenario
from .robolink import RobotClient


def _parse_overrides(pairs):
    out = []
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError("override", f"expected KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        out.append((key.strip(), yaml.safe_load(value)))
    return out


def _load_raw(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config", f"{path} must contain a mapping")
    return raw


def _config_from_args(args, force_network: bool | None = None):
    source = getattr(args, "config", None)
    if source is not None and Path(source).exists():
        raw = _load_raw(source)
    elif source is not None and source in PRESETS:
        raw = preset_dict(source)
    elif source is not None:
        raise ConfigError("config", f"{source!r} is neither a file nor a preset name")
    else:
        raw = preset_dict(args.name)
    for key, value in _parse_overrides(getattr(args, "override", []) or []):
        apply_override(raw, key, value)
    if force_network is not None:
        apply_override(raw, "network.enabled", force_network)
    return config_from_dict(raw)


def _trace_summary(trace) -> str:
    if len(trace) == 0:
        return "0 samples"
    return (
        f"{len(trace)} samples, final error {trace.e_bar[-1]:.2f}% of peak, "
        f"final KL {trace.kl[-1]:.4f}"
    )


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = run_scenario(cfg, out_dir=args.out, quiet=args.quiet)
    print(f"done: {_trace_summary(result.trace)}, artifacts in {result.output_dir}")
    return 0


def _cmd_oracle(args) -> int:
    cfg = _config_from_args(args)
    out = args.out if args.out is not None else cfg.output.directory
    times, errors = run_oracle(cfg, out_dir=out, scheme=args.scheme)
    ratio = errors[-1] / errors[0] if errors[0] > 0 else float("nan")
    print(
        f"done: {len(times)} samples, error {errors[0]:.6g} -> {errors[-1]:.6g} "
        f"(ratio {ratio:.3e}), decay curve in {out}"
    )
    return 0


def _cmd_serve(args) -> int:
    cfg = _config_from_args(args, force_network=True)
    result = run_scenario(cfg, out_dir=args.out, quiet=False)
    print(f"done: {_trace_summary(result.trace)}, artifacts in {result.output_dir}")
    return 0


def _cmd_robot(args) -> int:
    cfg = _config_from_args(args)
    if not 0 <= args.id < cfg.n_robots:
        raise ConfigError("id", f"robot id must be in [0, {cfg.n_robots - 1}]")
    host = args.host if args.host is not None else cfg.network.host
    port = args.port if args.port is not None else cfg.network.port
    if port == 0:
        raise ConfigError(
            "port", "need an explicit --port (or network.port) to reach the station"
        )
    _, robots = initial_layout(cfg)
    client = RobotClient(
        host=host,
        port=port,
        robot_id=args.id,
        state0=robots[args.id],
        dt=cfg.dt,
        drop_rate=args.drop_rate,
        drop_seed=args.drop_seed,
    )
    client.run()
    held = sum(1 for entry in client.log if entry[3])
    print(f"robot {args.id}: applied {len(client.log)} commands ({held} held), disconnected")
    return 0


def _cmd_validate(args) -> int:
    _config_from_args(args)
    print("ok")
    return 0


def _cmd_presets(_args) -> int:
    for name in sorted(PRESETS):
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cswarm", description="density control for swarms on a periodic arena"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_out=True):
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry by dotted path, e.g. gains.K_p=10",
        )
        if with_out:
            p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("run", help="run a scenario from a config file or preset name")
    p.add_argument("config", help="config file path or preset name")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    add_common(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("preset", help="run a built-in scenario by name")
    p.add_argument("name", help="preset name (see 'cswarm presets')")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    add_common(p)
    p.set_defaults(fn=_cmd_preset)

    p = sub.add_parser("oracle", help="continuum run, writes the decay curve")
    p.add_argument("config", help="config file path or preset name")
    p.add_argument("--scheme", choices=("euler", "midpoint"), default="euler")
    add_common(p)
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("serve", help="run as a station waiting for remote robots")
    p.add_argument("config", help="config file path or preset name")
    add_common(p)
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("robot", help="run one simulated robot client")
    p.add_argument("config", help="config file path or preset name")
    p.add_argument("--id", type=int, required=True, help="robot id (0-based)")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--drop-rate", type=float, default=0.0, help="simulated command loss")
    p.add_argument("--drop-seed", type=int, default=0)
    add_common(p, with_out=False)
    p.set_defaults(fn=_cmd_robot)

    p = sub.add_parser("validate", help="check a config file and exit")
    p.add_argument("config", help="config file path or preset name")
    add_common(p, with_out=False)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("presets", help="list built-in scenario names")
    p.set_defaults(fn=_cmd_presets)

    return parser


def _cmd_preset(args) -> int:
    args.config = None
    return _cmd_run(args)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, OSError, RuntimeError, ValueError, yaml.YAMLError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

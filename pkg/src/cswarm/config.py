"""Scenario configuration: schema, validation, presets, file round trip.

One YAML (or JSON, a YAML subset) file fully determines a trial.  Unknown
keys are rejected and every validation error names the offending field, so
typos fail fast.  Presets cover the four reference experiments plus a
mixed virtual/robot variant and the continuum decay study; `--override`
entries use dotted paths into the same schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import yaml

from .control import ControlGains
from .density import Hold, KDEParams, Line, MeanPath, Orbit, TargetProgram, VonMisesMode
from .diffdrive import (
    DEFAULT_LOOKAHEAD,
    DEFAULT_OMEGA_MAX,
    DEFAULT_TRACKING_GAIN,
    DEFAULT_V_MAX,
    RobotLimits,
)
from .kernels import KernelSpec
from .swarm import INTERACTION_DIRECT, INTERACTION_GRID

EXTENDED_AUTO = "auto"


class ConfigError(ValueError):
    """A configuration field failed validation; .field names it."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class RobotConfig:
    limits: RobotLimits = RobotLimits()
    tracking_gain: float = DEFAULT_TRACKING_GAIN
    pose_noise_sigma: float = 0.0


@dataclass(frozen=True)
class NetworkConfig:
    enabled: bool = False
    host: str = "127.0.0.1"
    port: int = 0
    pose_timeout: float = 10.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/trial"
    snapshot_times: tuple | None = None  # None -> {0, T/2, T}
    dump_control_fields: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    dimension: int = 2
    grid_cells: int = 200
    dt: float = 0.01
    duration: float = 10.0
    n_virtual: int = 100
    n_robots: int = 0
    seed: int = 0
    initial_jitter: float = 0.0
    interaction_mode: str = INTERACTION_DIRECT
    extended: str | bool = EXTENDED_AUTO
    extended_floor_fraction: float = 1e-3
    kernel: KernelSpec = KernelSpec()
    kde: KDEParams = KDEParams()
    gains: ControlGains = ControlGains()
    target: TargetProgram = None  # required
    robots: RobotConfig = RobotConfig()
    network: NetworkConfig = NetworkConfig()
    output: OutputConfig = OutputConfig()

    @property
    def n_agents(self) -> int:
        return self.n_virtual + self.n_robots

    @property
    def extended_enabled(self) -> bool:
        if self.extended == EXTENDED_AUTO:
            return self.n_robots > 0
        return bool(self.extended)

    def snapshot_times(self) -> tuple:
        if self.output.snapshot_times is not None:
            return tuple(self.output.snapshot_times)
        return (0.0, self.duration / 2.0, self.duration)


# --- dict <-> config ---------------------------------------------------------


def _reject_unknown(d: dict, allowed, where: str):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown field")


def _phase_from_dict(d: dict, where: str):
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(where, "each phase needs a 'type'")
    kind = d["type"]
    if kind == "hold":
        _reject_unknown(d, {"type", "duration"}, where)
        return Hold(float(d.get("duration", 1.0)))
    if kind == "line":
        _reject_unknown(d, {"type", "velocity", "duration"}, where)
        vel = d.get("velocity", (0.0, 0.0))
        if len(vel) != 2:
            raise ConfigError(f"{where}.velocity", "must be a pair")
        return Line((float(vel[0]), float(vel[1])), float(d.get("duration", 1.0)))
    if kind == "orbit":
        _reject_unknown(d, {"type", "center", "rate", "duration"}, where)
        center = d.get("center", (0.0, 0.0))
        if len(center) != 2:
            raise ConfigError(f"{where}.center", "must be a pair")
        duration = d.get("duration", None)
        duration = math.inf if duration in (None, ".inf") else float(duration)
        return Orbit((float(center[0]), float(center[1])), float(d.get("rate", math.pi / 4)), duration)
    raise ConfigError(f"{where}.type", f"unknown phase type {kind!r}")


def _phase_to_dict(p) -> dict:
    if isinstance(p, Hold):
        return {"type": "hold", "duration": p.duration}
    if isinstance(p, Line):
        return {"type": "line", "velocity": list(p.velocity), "duration": p.duration}
    if isinstance(p, Orbit):
        out = {"type": "orbit", "center": list(p.center), "rate": p.rate}
        if math.isfinite(p.duration):
            out["duration"] = p.duration
        return out
    raise TypeError(f"unknown phase {p!r}")


def _target_from_dict(d: dict, n_agents: int) -> TargetProgram:
    if not isinstance(d, dict):
        raise ConfigError("target", "must be a mapping")
    _reject_unknown(d, {"total_mass", "modes", "paths"}, "target")
    modes_raw = d.get("modes")
    if not modes_raw:
        raise ConfigError("target.modes", "at least one mode is required")
    modes = []
    for i, m in enumerate(modes_raw):
        where = f"target.modes.{i}"
        if not isinstance(m, dict):
            raise ConfigError(where, "must be a mapping")
        _reject_unknown(m, {"mean_x", "mean_y", "conc_x", "conc_y", "weight"}, where)
        try:
            modes.append(
                VonMisesMode(
                    mean_x=float(m.get("mean_x", 0.0)),
                    mean_y=float(m.get("mean_y", 0.0)),
                    conc_x=float(m.get("conc_x", 1.0)),
                    conc_y=float(m.get("conc_y", 1.0)),
                    weight=float(m.get("weight", 1.0)),
                )
            )
        except ValueError as err:
            raise ConfigError(where, str(err)) from None
    paths = []
    for i, p in enumerate(d.get("paths") or []):
        where = f"target.paths.{i}"
        if not isinstance(p, dict):
            raise ConfigError(where, "must be a mapping")
        _reject_unknown(p, {"phases"}, where)
        phases = tuple(
            _phase_from_dict(ph, f"{where}.phases.{j}") for j, ph in enumerate(p.get("phases") or [])
        )
        paths.append(MeanPath(phases))
    total_mass = d.get("total_mass")
    total_mass = float(total_mass) if total_mass is not None else float(n_agents)
    try:
        return TargetProgram(modes=tuple(modes), total_mass=total_mass, paths=tuple(paths))
    except ValueError as err:
        raise ConfigError("target", str(err)) from None


def _target_to_dict(t: TargetProgram) -> dict:
    out = {
        "total_mass": t.total_mass,
        "modes": [
            {
                "mean_x": m.mean_x,
                "mean_y": m.mean_y,
                "conc_x": m.conc_x,
                "conc_y": m.conc_y,
                "weight": m.weight,
            }
            for m in t.modes
        ],
    }
    if t.paths:
        out["paths"] = [{"phases": [_phase_to_dict(ph) for ph in p.phases]} for p in t.paths]
    return out


_TOP_KEYS = {
    "dimension", "grid_cells", "dt", "duration", "n_virtual", "n_robots", "seed",
    "initial_jitter", "interaction_mode", "extended", "extended_floor_fraction",
    "kernel", "kde", "gains", "target", "robots", "network", "output",
}


def config_from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    _reject_unknown(raw, _TOP_KEYS, "")

    def number(key, default, check, constraint):
        value = raw.get(key, default)
        if isinstance(default, int) and not isinstance(value, int):
            raise ConfigError(key, f"must be an integer ({constraint})")
        try:
            value = type(default)(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"must be {constraint}") from None
        if not check(value):
            raise ConfigError(key, f"must be {constraint}")
        return value

    dimension = number("dimension", 2, lambda v: v in (1, 2), "1 or 2")
    grid_cells = number("grid_cells", 200, lambda v: v >= 4 and v % 2 == 0, "even and >= 4")
    dt = number("dt", 0.01, lambda v: v > 0 and math.isfinite(v), "positive")
    duration = number("duration", 10.0, lambda v: v >= 0 and math.isfinite(v), "nonnegative")
    n_virtual = number("n_virtual", 100, lambda v: v >= 0, ">= 0")
    n_robots = number("n_robots", 0, lambda v: v >= 0, ">= 0")
    seed = number("seed", 0, lambda v: v >= 0, ">= 0")
    jitter = number("initial_jitter", 0.0, lambda v: v >= 0 and math.isfinite(v), ">= 0")
    floor_frac = number(
        "extended_floor_fraction", 1e-3, lambda v: 0 < v < 1, "in (0, 1)"
    )

    mode = raw.get("interaction_mode", INTERACTION_DIRECT)
    if mode not in (INTERACTION_DIRECT, INTERACTION_GRID):
        raise ConfigError("interaction_mode", f"must be 'direct' or 'grid', got {mode!r}")

    extended = raw.get("extended", EXTENDED_AUTO)
    if extended not in (EXTENDED_AUTO, True, False):
        raise ConfigError("extended", "must be true, false, or 'auto'")

    kernel_raw = dict(raw.get("kernel") or {})
    _reject_unknown(
        kernel_raw,
        {"kind", "length_scale", "periodization_layers", "repulse_amp",
         "repulse_range", "attract_amp", "attract_range"},
        "kernel",
    )
    try:
        kernel = KernelSpec(**kernel_raw)
    except (TypeError, ValueError) as err:
        raise ConfigError("kernel", str(err)) from None

    kde_raw = dict(raw.get("kde") or {})
    _reject_unknown(kde_raw, {"bandwidth"}, "kde")
    try:
        kde = KDEParams(**kde_raw)
    except (TypeError, ValueError) as err:
        raise ConfigError("kde", str(err)) from None

    gains_raw = dict(raw.get("gains") or {})
    _reject_unknown(
        gains_raw, {"K_p", "fourier_truncation", "density_floor", "zero_mode_rtol"}, "gains"
    )
    try:
        gains = ControlGains(**gains_raw)
    except (TypeError, ValueError) as err:
        raise ConfigError("gains", str(err)) from None

    if "target" not in raw:
        raise ConfigError("target", "is required")
    target = _target_from_dict(raw["target"], n_virtual + n_robots)

    robots_raw = dict(raw.get("robots") or {})
    _reject_unknown(
        robots_raw,
        {"v_max", "omega_max", "lookahead", "tracking_gain", "pose_noise_sigma"},
        "robots",
    )
    try:
        limits = RobotLimits(
            v_max=float(robots_raw.get("v_max", DEFAULT_V_MAX)),
            omega_max=float(robots_raw.get("omega_max", DEFAULT_OMEGA_MAX)),
            lookahead=float(robots_raw.get("lookahead", DEFAULT_LOOKAHEAD)),
        )
    except ValueError as err:
        raise ConfigError("robots", str(err)) from None
    tracking_gain = float(robots_raw.get("tracking_gain", DEFAULT_TRACKING_GAIN))
    if tracking_gain <= 0:
        raise ConfigError("robots.tracking_gain", "must be positive")
    noise = float(robots_raw.get("pose_noise_sigma", 0.0))
    if noise < 0:
        raise ConfigError("robots.pose_noise_sigma", "must be >= 0")
    robots = RobotConfig(limits=limits, tracking_gain=tracking_gain, pose_noise_sigma=noise)

    net_raw = dict(raw.get("network") or {})
    _reject_unknown(net_raw, {"enabled", "host", "port", "pose_timeout"}, "network")
    port = int(net_raw.get("port", 0))
    if port < 0 or port > 65535:
        raise ConfigError("network.port", "must be in [0, 65535]")
    network = NetworkConfig(
        enabled=bool(net_raw.get("enabled", False)),
        host=str(net_raw.get("host", "127.0.0.1")),
        port=port,
        pose_timeout=float(net_raw.get("pose_timeout", 10.0)),
    )

    out_raw = dict(raw.get("output") or {})
    _reject_unknown(out_raw, {"directory", "snapshot_times", "dump_control_fields"}, "output")
    snap = out_raw.get("snapshot_times")
    output = OutputConfig(
        directory=str(out_raw.get("directory", "runs/trial")),
        snapshot_times=tuple(float(t) for t in snap) if snap is not None else None,
        dump_control_fields=bool(out_raw.get("dump_control_fields", False)),
    )

    cfg = ScenarioConfig(
        dimension=dimension, grid_cells=grid_cells, dt=dt, duration=duration,
        n_virtual=n_virtual, n_robots=n_robots, seed=seed, initial_jitter=jitter,
        interaction_mode=mode, extended=extended, extended_floor_fraction=floor_frac,
        kernel=kernel, kde=kde, gains=gains, target=target, robots=robots,
        network=network, output=output,
    )
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ScenarioConfig):
    if cfg.n_robots > 0 and cfg.dimension != 2:
        raise ConfigError("n_robots", "robots require a planar (dimension=2) scenario")
    if cfg.dimension != 2:
        raise ConfigError("dimension", "scenario targets are planar; use dimension 2")
    if cfg.target.paths and len(cfg.target.paths) != len(cfg.target.modes):
        raise ConfigError("target.paths", "must match the number of modes")


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "dimension": cfg.dimension,
        "grid_cells": cfg.grid_cells,
        "dt": cfg.dt,
        "duration": cfg.duration,
        "n_virtual": cfg.n_virtual,
        "n_robots": cfg.n_robots,
        "seed": cfg.seed,
        "initial_jitter": cfg.initial_jitter,
        "interaction_mode": cfg.interaction_mode,
        "extended": cfg.extended,
        "extended_floor_fraction": cfg.extended_floor_fraction,
        "kernel": {
            "kind": cfg.kernel.kind,
            "length_scale": cfg.kernel.length_scale,
            "periodization_layers": cfg.kernel.periodization_layers,
            "repulse_amp": cfg.kernel.repulse_amp,
            "repulse_range": cfg.kernel.repulse_range,
            "attract_amp": cfg.kernel.attract_amp,
            "attract_range": cfg.kernel.attract_range,
        },
        "kde": {"bandwidth": cfg.kde.bandwidth},
        "gains": {
            "K_p": cfg.gains.K_p,
            "fourier_truncation": cfg.gains.fourier_truncation,
            "density_floor": cfg.gains.density_floor,
            "zero_mode_rtol": cfg.gains.zero_mode_rtol,
        },
        "target": _target_to_dict(cfg.target),
        "robots": {
            "v_max": cfg.robots.limits.v_max,
            "omega_max": cfg.robots.limits.omega_max,
            "lookahead": cfg.robots.limits.lookahead,
            "tracking_gain": cfg.robots.tracking_gain,
            "pose_noise_sigma": cfg.robots.pose_noise_sigma,
        },
        "network": {
            "enabled": cfg.network.enabled,
            "host": cfg.network.host,
            "port": cfg.network.port,
            "pose_timeout": cfg.network.pose_timeout,
        },
        "output": {
            "directory": cfg.output.directory,
            "snapshot_times": list(cfg.output.snapshot_times)
            if cfg.output.snapshot_times is not None
            else None,
            "dump_control_fields": cfg.output.dump_control_fields,
        },
    }


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError("config", f"{path} is empty")
    return config_from_dict(raw)


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)


def apply_override(raw: dict, dotted: str, value) -> None:
    """Set raw[a][b]... = value along a dotted path; integers index lists."""
    parts = dotted.split(".")
    node = raw
    for i, part in enumerate(parts[:-1]):
        key = int(part) if isinstance(node, list) else part
        try:
            nxt = node[key]
        except (KeyError, IndexError, TypeError):
            nxt = None
        if nxt is None or not isinstance(nxt, (dict, list)):
            nxt = {}
            node[key] = nxt
        node = nxt
    last = parts[-1]
    key = int(last) if isinstance(node, list) else last
    node[key] = value


# --- presets -----------------------------------------------------------------

_PI = math.pi


def _base(n_virtual=100, n_robots=0) -> dict:
    return {
        "dimension": 2,
        "grid_cells": 200,
        "dt": 0.01,
        "duration": 10.0,
        "n_virtual": n_virtual,
        "n_robots": n_robots,
        "seed": 0,
        "gains": {"K_p": 5.0},
        "kernel": {"kind": "repulsive_exp", "length_scale": 1.0, "periodization_layers": 2},
        "kde": {"bandwidth": 0.4},
    }


def _preset_monomodal_regulation() -> dict:
    cfg = _base()
    cfg["target"] = {
        "modes": [{"mean_x": 0.0, "mean_y": 0.0, "conc_x": 1.5, "conc_y": 1.5}]
    }
    cfg["output"] = {"directory": "runs/monomodal-regulation"}
    return cfg


def _preset_multimodal_regulation() -> dict:
    cfg = _base()
    cfg["target"] = {
        "modes": [
            {"mean_x": sx * _PI / 2, "mean_y": sy * _PI / 2, "conc_x": 2.0, "conc_y": 2.0}
            for sx, sy in ((-1, -1), (-1, 1), (1, -1), (1, 1))
        ]
    }
    cfg["output"] = {"directory": "runs/multimodal-regulation"}
    return cfg


def _preset_monomodal_tracking() -> dict:
    cfg = _base()
    cfg["target"] = {
        "modes": [{"mean_x": 0.0, "mean_y": 0.0, "conc_x": 1.0, "conc_y": 1.0}],
        "paths": [
            {
                "phases": [
                    {"type": "hold", "duration": 1.0},
                    {"type": "line", "velocity": [_PI / 4, 0.0], "duration": 2.0},
                    {"type": "orbit", "center": [0.0, 0.0], "rate": _PI / 4},
                ]
            }
        ],
    }
    cfg["output"] = {"directory": "runs/monomodal-tracking"}
    return cfg


def _preset_multimodal_tracking() -> dict:
    cfg = _base()
    orbit = [
        {"type": "hold", "duration": 1.0},
        {"type": "orbit", "center": [0.0, 0.0], "rate": _PI / 4},
    ]
    cfg["target"] = {
        "modes": [
            {"mean_x": 2 * _PI / 3, "mean_y": 0.0, "conc_x": 2.2, "conc_y": 2.2},
            {"mean_x": -2 * _PI / 3, "mean_y": 0.0, "conc_x": 2.2, "conc_y": 2.2},
        ],
        "paths": [{"phases": orbit}, {"phases": orbit}],
    }
    cfg["output"] = {"directory": "runs/multimodal-tracking"}
    return cfg


def _preset_mixed_monomodal() -> dict:
    cfg = _preset_monomodal_regulation()
    cfg["n_virtual"] = 96
    cfg["n_robots"] = 4
    cfg["extended"] = False  # same domain as the all-virtual run, for parity
    cfg["output"] = {"directory": "runs/mixed-monomodal"}
    return cfg


def _preset_theorem1() -> dict:
    """Continuum decay study; unit mass keeps the advective CFL mild."""
    return {
        "dimension": 2,
        "grid_cells": 128,
        "dt": 1e-3,
        "duration": 1.0,
        "n_virtual": 0,
        "n_robots": 0,
        "gains": {"K_p": 5.0},
        "kernel": {"kind": "repulsive_exp", "length_scale": 1.0, "periodization_layers": 2},
        "target": {
            "total_mass": 1.0,
            "modes": [{"mean_x": 0.0, "mean_y": 0.0, "conc_x": 1.5, "conc_y": 1.5}],
        },
        "output": {"directory": "runs/theorem1"},
    }


PRESETS = {
    "monomodal-regulation": _preset_monomodal_regulation,
    "multimodal-regulation": _preset_multimodal_regulation,
    "monomodal-tracking": _preset_monomodal_tracking,
    "multimodal-tracking": _preset_multimodal_tracking,
    "mixed-monomodal": _preset_mixed_monomodal,
    "theorem1": _preset_theorem1,
}


def preset_dict(name: str) -> dict:
    try:
        factory = PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError("preset", f"unknown preset {name!r} (known: {known})") from None
    return factory()


def preset_config(name: str, overrides=()) -> ScenarioConfig:
    raw = preset_dict(name)
    for dotted, value in overrides:
        apply_override(raw, dotted, value)
    return config_from_dict(raw)

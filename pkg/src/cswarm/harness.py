"""Scenario harness: wires config, grid, target, swarm, and drivers into runs.

`run_scenario` executes one closed-loop trial and leaves a reproducible
record behind: a config echo, the per-frame trace CSV, and density
snapshots in a self-describing text format that round-trips exactly.
`run_oracle` integrates the continuum model instead of agents and writes
the error-decay curve used by the convergence study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, save_config
from .density import embed_extended, estimate_density, target_density
from .diffdrive import RobotState
from .domain import Grid, ScalarField, VectorField, integrate, wrap_point
from .metrics import TrialTrace, kl_divergence, l2_error
from .oracle import run_controlled_macro
from .robolink import NetworkRobotDriver, StationServer
from .swarm import (
    FrameContext,
    InProcessRobotDriver,
    SwarmState,
    closed_loop_frame,
    square_lattice,
)

_FIELD_MAGIC = "CSWARM-FIELD 1"
_ORDER_TAG = "x1-fastest"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --- field dumps --------------------------------------------------------------


def export_field(field, path) -> None:
    """Write a field as header + one line per node, first axis fastest."""
    grid = field.grid
    if isinstance(field, VectorField):
        comps = field.values.shape[-1]
        flat = [field.values[..., c].reshape(-1, order="F") for c in range(comps)]
    else:
        comps = 1
        flat = [field.values.reshape(-1, order="F")]
    lines = [
        _FIELD_MAGIC,
        f"dim {grid.dim}",
        f"cells {grid.cells}",
        f"components {comps}",
        f"order {_ORDER_TAG}",
    ]
    n_nodes = grid.cells**grid.dim
    for i in range(n_nodes):
        lines.append(" ".join(_fmt(f[i]) for f in flat))
    Path(path).write_text("\n".join(lines) + "\n")


def _header_int(line: str, key: str, path) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise ValueError(f"{path}: expected '{key} <n>', found {line!r}")
    try:
        return int(parts[1])
    except ValueError:
        raise ValueError(f"{path}: expected '{key} <n>', found {line!r}") from None


def import_field(path, grid: Grid | None = None):
    """Read a field dump; with `grid` given, mismatched geometry is an error."""
    text = Path(path).read_text().splitlines()
    if len(text) < 5:
        raise ValueError(f"{path}: truncated field file")
    if text[0] != _FIELD_MAGIC:
        raise ValueError(f"{path}: expected header {_FIELD_MAGIC!r}, found {text[0]!r}")
    dim = _header_int(text[1], "dim", path)
    cells = _header_int(text[2], "cells", path)
    comps = _header_int(text[3], "components", path)
    if text[4] != f"order {_ORDER_TAG}":
        raise ValueError(f"{path}: expected 'order {_ORDER_TAG}', found {text[4]!r}")
    if grid is not None and (dim != grid.dim or cells != grid.cells):
        raise ValueError(
            f"{path}: field file has dim={dim}, cells={cells}; "
            f"expected dim={grid.dim}, cells={grid.cells}"
        )
    target_grid = grid if grid is not None else Grid(dim=dim, cells=cells)
    n_nodes = cells**dim
    rows = text[5 : 5 + n_nodes]
    if len(rows) != n_nodes:
        raise ValueError(f"{path}: expected {n_nodes} value lines, found {len(rows)}")
    vals = np.loadtxt(rows, dtype=float, ndmin=2)
    if vals.shape != (n_nodes, comps):
        raise ValueError(
            f"{path}: expected {n_nodes}x{comps} values, found {vals.shape[0]}x{vals.shape[1]}"
        )
    shape = target_grid.shape
    if comps == 1:
        return ScalarField(grid=target_grid, values=vals[:, 0].reshape(shape, order="F"))
    comps_grids = [vals[:, c].reshape(shape, order="F") for c in range(comps)]
    return VectorField(grid=target_grid, values=np.stack(comps_grids, axis=-1))


# --- scenario assembly --------------------------------------------------------


def run_grid(cfg: ScenarioConfig) -> Grid:
    cells = 2 * cfg.grid_cells if cfg.extended_enabled else cfg.grid_cells
    return Grid(dim=cfg.dimension, cells=cells)


def arena_grid(cfg: ScenarioConfig) -> Grid:
    return Grid(dim=cfg.dimension, cells=cfg.grid_cells)


def target_builder(cfg: ScenarioConfig):
    """Return t -> desired density on the run grid (embedded when extended)."""
    inner_grid = arena_grid(cfg)
    frac = cfg.extended_floor_fraction
    extended = cfg.extended_enabled

    def build(t: float) -> ScalarField:
        inner = target_density(cfg.target, t, inner_grid)
        if not extended:
            return inner
        return embed_extended(inner, floor=frac * float(inner.values.max()))

    if cfg.target.is_static:
        cached = build(0.0)
        return lambda t: cached
    return build


def initial_layout(cfg: ScenarioConfig):
    """Lattice sites for all agents; robots take evenly strided sites.

    The same seed reproduces the same layout, which lets a remote robot
    process recover its own starting pose from the shared config.
    """
    n = cfg.n_agents
    if n < 1:
        raise ConfigError("n_virtual", "need at least one agent (virtual or robot)")
    if cfg.extended_enabled:
        lo, hi = -math.pi / 2.0, math.pi / 2.0
    else:
        lo, hi = -math.pi, math.pi
    sites = square_lattice(n, cfg.dimension, lo=lo, hi=hi)
    if cfg.initial_jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        sites = wrap_point(sites + rng.uniform(-cfg.initial_jitter, cfg.initial_jitter, sites.shape))
    if cfg.n_robots == 0:
        return sites, []
    robot_idx = np.unique(np.linspace(0, n - 1, cfg.n_robots).round().astype(int))
    if robot_idx.size != cfg.n_robots:
        robot_idx = np.arange(cfg.n_robots)
    mask = np.zeros(n, dtype=bool)
    mask[robot_idx] = True
    robots = [
        RobotState(position=(float(sites[i, 0]), float(sites[i, 1])), heading=0.0)
        for i in robot_idx
    ]
    return sites[~mask], robots


def _check_runnable(cfg: ScenarioConfig) -> int:
    if cfg.n_agents < 1:
        raise ConfigError("n_virtual", "need at least one agent (virtual or robot)")
    if abs(cfg.target.total_mass - cfg.n_agents) > 1e-6 * max(1.0, cfg.n_agents):
        raise ConfigError(
            "target.total_mass",
            f"must equal the agent count ({cfg.n_agents}) for agent-based runs, "
            f"got {cfg.target.total_mass}",
        )
    if cfg.network.enabled and cfg.n_robots == 0:
        raise ConfigError("network.enabled", "needs n_robots >= 1")
    n_steps = int(round(cfg.duration / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.duration) > 1e-6 * max(1.0, cfg.duration):
        raise ConfigError("duration", "must be an integer number of dt steps")
    return n_steps


@dataclass
class TrialResult:
    config: ScenarioConfig
    trace: TrialTrace
    final_state: SwarmState
    output_dir: Path | None
    station_port: int | None = None
    # per-frame robot diagnostics; None when the trial ran without robots.
    # robot_poses has shape (n_frames, n_robots, 3): x, y, heading before
    # each frame.  robot_tracking_sq is the mean squared reference miss of
    # the tracking points, one entry per frame.
    robot_poses: np.ndarray | None = None
    robot_tracking_sq: np.ndarray | None = None


def _snapshot_density(state: SwarmState, ctx: FrameContext) -> ScalarField:
    # Snapshots use true (unquantized, noise-free) poses so they never
    # consume the run's random stream.
    pts = [state.virtual_positions] if state.virtual_positions.size else []
    pts += [r.position_array()[None, :] for r in state.robots]
    all_pts = np.concatenate(pts, axis=0)
    return estimate_density(all_pts, ctx.kde, ctx.grid)


def run_scenario(cfg: ScenarioConfig, out_dir=None, on_station=None, quiet=True) -> TrialResult:
    n_steps = _check_runnable(cfg)
    out_path = Path(out_dir) if out_dir is not None else Path(cfg.output.directory)
    out_path.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_path / "config_echo.yaml")

    grid = run_grid(cfg)
    target_at = target_builder(cfg)
    virtual, robots = initial_layout(cfg)
    state = SwarmState(virtual_positions=virtual, robots=robots, t=0.0, step=0)

    rng = np.random.default_rng(cfg.seed + 1)  # jitter uses cfg.seed itself
    station = None
    try:
        if cfg.n_robots == 0:
            driver = None
        elif not cfg.network.enabled:
            driver = InProcessRobotDriver(
                gain=cfg.robots.tracking_gain, limits=cfg.robots.limits, dt=cfg.dt
            )
        else:
            station = StationServer(
                host=cfg.network.host,
                port=cfg.network.port,
                dt=cfg.dt,
                pose_timeout=cfg.network.pose_timeout,
            )
            port = station.start()
            ids = list(range(cfg.n_robots))
            if not quiet:
                print(f"station listening on {cfg.network.host}:{port}, waiting for {len(ids)} robot(s)", flush=True)
            if on_station is not None:
                on_station(station)
            if not station.ready(ids, timeout=cfg.network.pose_timeout):
                raise RuntimeError(
                    f"robots {sorted(set(ids) - set(station.live_robots()))} did not connect "
                    f"within {cfg.network.pose_timeout}s"
                )
            driver = NetworkRobotDriver(
                station, ids, gain=cfg.robots.tracking_gain, limits=cfg.robots.limits
            )

        ctx = FrameContext(
            grid=grid,
            kernel=cfg.kernel,
            gains=cfg.gains,
            kde=cfg.kde,
            dt=cfg.dt,
            robot_driver=driver,
            interaction_mode=cfg.interaction_mode,
            pose_noise_sigma=cfg.robots.pose_noise_sigma,
            rng=rng,
        )

        snap_steps = {}
        for t_req in cfg.snapshot_times():
            k = int(round(t_req / cfg.dt))
            if 0 <= k <= n_steps:
                snap_steps[k] = k * cfg.dt

        def dump_state_snapshot(step_idx: int, snap_state: SwarmState):
            tag = f"step{step_idx:06d}"
            export_field(_snapshot_density(snap_state, ctx), out_path / f"density_{tag}.txt")
            export_field(target_at(step_idx * cfg.dt), out_path / f"target_{tag}.txt")

        records = []
        for k in range(n_steps):
            target = target_at(state.t)
            want_snap = k in snap_steps
            if want_snap:
                dump_state_snapshot(k, state)
            state, fields, record = closed_loop_frame(state, target, ctx)
            records.append(record)
            if want_snap and cfg.output.dump_control_fields:
                # the fields describe the frame's pre-step state at t = k dt
                tag = f"step{k:06d}"
                export_field(fields.source, out_path / f"source_{tag}.txt")
                export_field(fields.command, out_path / f"command_{tag}.txt")
            if not quiet and n_steps >= 10 and (k + 1) % max(1, n_steps // 10) == 0:
                print(f"frame {k + 1}/{n_steps}  t={state.t:.3f}", flush=True)

        if n_steps in snap_steps:
            dump_state_snapshot(n_steps, state)

        if n_steps == 0:
            empty = np.zeros(0)
            trace = TrialTrace(times=empty, error_sq=empty.copy(), kl=empty.copy(),
                               density_mass=empty.copy())
        else:
            # closing sample at t = duration, computed like a frame's pre-step
            # metrics but from true poses (keeps the random stream untouched)
            final_target = target_at(state.t)
            final_rho = _snapshot_density(state, ctx)
            final_err = l2_error(final_rho, final_target)
            final_kl = kl_divergence(final_rho, final_target)
            times = np.array([r.t for r in records] + [state.t])
            err_sq = np.array([r.error_sq for r in records] + [final_err**2])
            kls = np.array([r.kl for r in records] + [final_kl])
            masses = np.array([r.density_mass for r in records] + [float(integrate(final_rho))])
            trace = TrialTrace(times=times, error_sq=err_sq, kl=kls, density_mass=masses)
        trace.finalize()
        trace.to_csv(out_path / "trace.csv")
    finally:
        if station is not None:
            station.close()

    robot_poses = None
    tracking_sq = None
    if cfg.n_robots > 0:
        robot_poses = np.array(
            [[(r.position[0], r.position[1], r.heading) for r in rec.robot_states]
             for rec in records]
        )
        tracking_sq = np.array([rec.robot_tracking_sq for rec in records])

    return TrialResult(
        config=cfg,
        trace=trace,
        final_state=state,
        output_dir=out_path,
        station_port=station.port if station is not None else None,
        robot_poses=robot_poses,
        robot_tracking_sq=tracking_sq,
    )


# --- continuum oracle runs ----------------------------------------------------


def run_oracle(cfg: ScenarioConfig, out_dir=None, scheme: str = "euler"):
    """Integrate the continuum closed loop and write the decay curve."""
    grid = arena_grid(cfg)
    mass = cfg.target.total_mass
    rho0 = ScalarField.uniform(grid, mass / grid.cell_volume / grid.cells**grid.dim)
    times, errors = run_controlled_macro(
        rho0=rho0,
        program=cfg.target,
        kernel=cfg.kernel,
        gains=cfg.gains,
        duration=cfg.duration,
        dt=cfg.dt,
        scheme=scheme,
    )
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out_path / "config_echo.yaml")
        lines = ["step,t,error_l2"]
        for i, (t, e) in enumerate(zip(times, errors)):
            lines.append(f"{i},{_fmt(t)},{_fmt(e)}")
        (out_path / "decay.csv").write_text("\n".join(lines) + "\n")
    return times, errors

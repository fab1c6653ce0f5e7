"""Microscopic swarm dynamics and the per-frame closed loop.

Virtual agents are first-order integrators

    x_i' = (1/N) sum_k f(wrap(x_i - x_k)) + u_i

with the periodized pairwise kernel f and the sampled command field u.
The 1/N mean over partners is the discrete counterpart of the mass-scaled
interaction velocity (kernel * rho)/M used by the control law; the two
must share one convention or the cancellation terms in the source act at
the wrong magnitude.  Robots join the swarm through their wheel midpoints:
they contribute to the density estimate and to interaction sums like any
agent, but execute commands through the differential-drive tracking layer,
either in-process or over the robot link.  One closed-loop frame estimates
the density of everyone, evaluates the control fields against the current
target, advances the virtual agents with forward Euler, and hands each
robot a one-step reference along the command field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffdrive
from .control import ControlGains, control_step, microscopic_inputs
from .density import KDEParams, estimate_density
from .domain import Grid, ScalarField, circ_conv, integrate, sample_bilinear, wrap_point, wrapped_disp
from .kernels import KernelSpec, kernel_field, periodize
from .metrics import kl_divergence, l2_error

INTERACTION_DIRECT = "direct"
INTERACTION_GRID = "grid"


@dataclass
class SwarmState:
    """Positions of the virtual agents (rows) plus robot states and clock."""

    virtual_positions: np.ndarray
    robots: list = field(default_factory=list)
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        pos = np.asarray(self.virtual_positions, dtype=float)
        if pos.ndim != 2:
            raise ValueError("SwarmState: virtual_positions must be (n, dim)")
        if not np.all(np.isfinite(pos)):
            raise ValueError("SwarmState: positions must be finite")
        self.virtual_positions = wrap_point(pos)

    @property
    def dim(self) -> int:
        return self.virtual_positions.shape[1]


def square_lattice(n: int, dim: int, lo: float = -math.pi, hi: float = math.pi) -> np.ndarray:
    """First n sites of the smallest cell-centered square lattice covering
    [lo, hi)^dim; a perfect square (or cube root) count fills it exactly."""
    if n < 1:
        raise ValueError("square_lattice: n must be >= 1")
    per_axis = math.ceil(n ** (1.0 / dim) - 1e-9)
    step = (hi - lo) / per_axis
    axis = lo + (np.arange(per_axis) + 0.5) * step
    if dim == 1:
        sites = axis[:, None]
    else:
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        sites = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    return wrap_point(sites[:n])


def pairwise_interactions(
    positions: np.ndarray, kernel: KernelSpec, sources: np.ndarray | None = None
) -> np.ndarray:
    """Direct mean-of-pairs interaction velocities, shape (n, dim).

    Each row i is (1/N) sum over source agents of f(wrap(x_i - x_k)).  By
    default the agents themselves are the sources; pass `sources` to let a
    larger population (e.g. robots included) act on them, in which case
    any exactly co-located pair is treated as a self and contributes zero.
    """
    positions = np.asarray(positions, dtype=float)
    src = positions if sources is None else np.asarray(sources, dtype=float)
    n_src = src.shape[0]
    if n_src == 0:
        return np.zeros_like(positions)
    disp = wrapped_disp(positions[:, None, :], src[None, :, :])
    forces = periodize(kernel, disp)
    self_pair = np.all(disp == 0.0, axis=-1)
    forces[self_pair] = 0.0  # soft core, exact
    return forces.sum(axis=1) / n_src


def interaction_sum(positions: np.ndarray, i: int, kernel: KernelSpec) -> np.ndarray:
    """Interaction velocity of agent i alone: the mean of its pair terms."""
    positions = np.asarray(positions, dtype=float)
    disp = wrapped_disp(positions[i], positions)
    forces = periodize(kernel, disp)
    forces[i] = 0.0
    return forces.sum(axis=0) / positions.shape[0]


def grid_interactions(
    positions: np.ndarray,
    kernel: KernelSpec,
    grid: Grid,
    sources: np.ndarray | None = None,
) -> np.ndarray:
    """Grid-accelerated interaction velocities, O(n + G^d log G).

    Deposits the source agents to nearest cells, convolves with the kernel
    field, divides by the source count and reads back at the agents' cells.
    The kernel field is zero at the origin node, so an agent never forces
    itself; co-located agents are lumped, which is the documented
    approximation.
    """
    positions = np.asarray(positions, dtype=float)
    src = positions if sources is None else np.asarray(sources, dtype=float)
    if src.shape[0] == 0:
        return np.zeros_like(positions)
    counts = np.zeros(grid.shape)
    src_idx = grid.nearest_index(src)
    np.add.at(counts, tuple(src_idx.T), 1.0 / grid.cell_volume)
    summed = circ_conv(kernel_field(kernel, grid), ScalarField(grid, counts))
    idx = grid.nearest_index(positions)
    return summed.values[tuple(idx.T)] / src.shape[0]


def euler_step(
    state: SwarmState,
    inputs: np.ndarray,
    kernel: KernelSpec,
    dt: float,
    interaction_mode: str = INTERACTION_DIRECT,
    grid: Grid | None = None,
    source_positions: np.ndarray | None = None,
) -> SwarmState:
    """Advance the virtual agents one step; robots are untouched here.

    source_positions widens the interaction partners beyond the virtual
    agents themselves (the closed loop passes everyone, robots included).
    """
    if dt <= 0:
        raise ValueError("euler_step: dt must be positive")
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != state.virtual_positions.shape:
        raise ValueError("euler_step: inputs shape must match virtual positions")
    if interaction_mode == INTERACTION_GRID:
        if grid is None:
            raise ValueError("euler_step: grid interactions need a grid")
        interactions = grid_interactions(
            state.virtual_positions, kernel, grid, sources=source_positions
        )
    elif interaction_mode == INTERACTION_DIRECT:
        interactions = pairwise_interactions(
            state.virtual_positions, kernel, sources=source_positions
        )
    else:
        raise ValueError(f"euler_step: unknown interaction_mode {interaction_mode!r}")
    new_pos = wrap_point(state.virtual_positions + dt * (interactions + inputs))
    return SwarmState(new_pos, robots=state.robots, t=state.t + dt, step=state.step + 1)


@dataclass
class FrameRecord:
    """What the recorder keeps from one closed-loop frame."""

    step: int
    t: float
    error_sq: float
    kl: float
    density_mass: float
    virtual_positions: np.ndarray
    robot_states: list
    # mean squared distance of the robots' tracking points from the frame's
    # references, measured after their step; None when no robots run
    robot_tracking_sq: float | None = None


class InProcessRobotDriver:
    """Runs the tracking layer locally, one kinematics step per frame."""

    def __init__(self, gain: float, limits: diffdrive.RobotLimits, dt: float):
        self.gain = gain
        self.limits = limits
        self.dt = dt

    def step(self, robots, observed, references):
        out = []
        for robot, obs, (x_des, v_des) in zip(robots, observed, references):
            v, omega = diffdrive.tracking_command(obs, x_des, v_des, self.gain, self.limits)
            v, omega = diffdrive.quantize(v), diffdrive.quantize(omega)
            out.append(diffdrive.kinematics_step(robot, v, omega, self.dt))
        return out

    def close(self):
        pass


@dataclass
class FrameContext:
    """Everything a closed-loop frame needs besides the state and target."""

    grid: Grid
    kernel: KernelSpec
    gains: ControlGains
    kde: KDEParams
    dt: float
    robot_driver: InProcessRobotDriver | None = None
    interaction_mode: str = INTERACTION_DIRECT
    pose_noise_sigma: float = 0.0
    rng: np.random.Generator | None = None


def _observe_robots(robots, ctx: FrameContext):
    observed = []
    for robot in robots:
        noise = None
        if ctx.pose_noise_sigma > 0.0:
            if ctx.rng is None:
                raise ValueError("pose noise requires an rng in the frame context")
            noise = ctx.rng.normal(0.0, ctx.pose_noise_sigma, size=3)
        observed.append(diffdrive.observe(robot, noise))
    return observed


def closed_loop_frame(state: SwarmState, target: ScalarField, ctx: FrameContext):
    """One frame: estimate, control, move agents, drive robots, record.

    Returns (new_state, control_fields, frame_record).  The record reflects
    the pre-step state and the fields computed from it.
    """
    observed = _observe_robots(state.robots, ctx)
    if observed:
        robot_pts = np.array([r.position for r in observed])
        everyone = np.vstack([state.virtual_positions, robot_pts])
    else:
        robot_pts = None
        everyone = state.virtual_positions
    rho = estimate_density(everyone, ctx.kde, ctx.grid)
    fields = control_step(rho, target, ctx.kernel, ctx.gains)

    record = FrameRecord(
        step=state.step,
        t=state.t,
        error_sq=l2_error(rho, target) ** 2,
        kl=kl_divergence(rho, target),
        density_mass=integrate(rho),
        virtual_positions=state.virtual_positions.copy(),
        robot_states=list(state.robots),
    )

    inputs = microscopic_inputs(fields.command, state.virtual_positions)
    new_state = euler_step(
        state, inputs, ctx.kernel, ctx.dt,
        interaction_mode=ctx.interaction_mode, grid=ctx.grid,
        source_positions=everyone if robot_pts is not None else None,
    )

    if state.robots:
        if ctx.robot_driver is None:
            raise ValueError("closed_loop_frame: robots present but no driver configured")
        references = []
        for obs in observed:
            pos = obs.position_array()
            v_des = sample_bilinear(fields.command, pos)
            x_des = wrap_point(pos + ctx.dt * v_des)
            references.append((x_des, v_des))
        new_state.robots = ctx.robot_driver.step(state.robots, observed, references)
        lookahead = ctx.robot_driver.limits.lookahead
        miss = 0.0
        for robot, (x_des, _) in zip(new_state.robots, references):
            gap = wrapped_disp(x_des, diffdrive.point_b(robot, lookahead))
            miss += float(gap @ gap)
        record.robot_tracking_sq = miss / len(new_state.robots)
    return new_state, fields, record

"""Differential-drive kinematics and feedback-linearized tracking.

Unicycle model, forward Euler:

    x1' = v cos(theta),  x2' = v sin(theta),  theta' = omega.

Commands act on the off-axis point B = x + b * (cos theta, sin theta); its
velocity is linear in (v, b*omega), so any planar velocity v_B maps back
through

    v = vB1 cos(theta) + vB2 sin(theta)
    omega = (vB2 cos(theta) - vB1 sin(theta)) / b.

Actuator limits saturate jointly: one scale factor shrinks both commands so
direction is preserved.  Default limits correspond to a 0.8 m/s cart with
14 rad/s wheels on the 2 m arena mapped to the full torus.

Wire-format note: observed poses and commands are quantized to 9 decimal
places, matching the robot-link text protocol, so in-process and networked
runs perform identical arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import wrap_point, wrapped_disp

DEFAULT_V_MAX = 4.0 * math.pi     # 0.8 m/s on the 2 m <-> 2*pi arena map
DEFAULT_OMEGA_MAX = 70.0          # 14 rad/s at 5 s per time unit
DEFAULT_LOOKAHEAD = 0.05
DEFAULT_TRACKING_GAIN = 10.0

WIRE_DECIMALS = 9


def quantize(value: float) -> float:
    """Round to the wire precision (9 decimal places)."""
    return float(f"{value:.{WIRE_DECIMALS}f}")


@dataclass(frozen=True)
class RobotLimits:
    v_max: float = DEFAULT_V_MAX
    omega_max: float = DEFAULT_OMEGA_MAX
    lookahead: float = DEFAULT_LOOKAHEAD

    def __post_init__(self):
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ValueError("RobotLimits: v_max and omega_max must be positive")
        if self.lookahead <= 0:
            raise ValueError("RobotLimits: lookahead must be positive")


@dataclass(frozen=True)
class RobotState:
    """Wheel-axis midpoint position, heading, and last applied command."""

    position: tuple
    heading: float
    cmd_v: float = 0.0
    cmd_omega: float = 0.0

    def __post_init__(self):
        pos = tuple(float(c) for c in self.position)
        if len(pos) != 2 or not all(math.isfinite(c) for c in pos):
            raise ValueError("RobotState: position must be a finite planar point")
        if not math.isfinite(self.heading):
            raise ValueError("RobotState: heading must be finite")
        object.__setattr__(self, "position", pos)

    def position_array(self) -> np.ndarray:
        return np.array(self.position, dtype=float)


def point_b(state: RobotState, lookahead: float) -> np.ndarray:
    """The commanded off-axis point, lookahead ahead of the wheel axis."""
    return wrap_point(
        state.position_array()
        + lookahead * np.array([math.cos(state.heading), math.sin(state.heading)])
    )


def kinematics_step(state: RobotState, v: float, omega: float, dt: float) -> RobotState:
    """Advance the unicycle one forward-Euler step and wrap."""
    if dt <= 0:
        raise ValueError("kinematics_step: dt must be positive")
    x = state.position_array()
    x = x + dt * v * np.array([math.cos(state.heading), math.sin(state.heading)])
    x = wrap_point(x)
    heading = float(wrap_point(state.heading + dt * omega))
    return RobotState(tuple(x), heading, cmd_v=float(v), cmd_omega=float(omega))


def feedback_linearize(heading: float, velocity, limits: RobotLimits) -> tuple:
    """Map a desired point-B velocity to saturated (v, omega)."""
    vx, vy = float(velocity[0]), float(velocity[1])
    c, s = math.cos(heading), math.sin(heading)
    v = vx * c + vy * s
    omega = (vy * c - vx * s) / limits.lookahead
    scale = 1.0
    if v != 0.0:
        scale = min(scale, limits.v_max / abs(v))
    if omega != 0.0:
        scale = min(scale, limits.omega_max / abs(omega))
    return v * scale, omega * scale


def tracking_command(
    state: RobotState,
    desired_position,
    desired_velocity,
    gain: float,
    limits: RobotLimits,
) -> tuple:
    """Point-B tracking law: feedforward plus proportional wrap-aware error."""
    if gain <= 0:
        raise ValueError("tracking_command: gain must be positive")
    err = wrapped_disp(np.asarray(desired_position, dtype=float), point_b(state, limits.lookahead))
    v_b = np.asarray(desired_velocity, dtype=float) + gain * err
    return feedback_linearize(state.heading, v_b, limits)


def observe(state: RobotState, noise=None) -> RobotState:
    """Camera-grade observation: optional noise, then wire quantization."""
    x, y = state.position
    theta = state.heading
    if noise is not None:
        x, y, theta = x + noise[0], y + noise[1], theta + noise[2]
        wrapped = wrap_point(np.array([x, y, theta]))
        x, y, theta = float(wrapped[0]), float(wrapped[1]), float(wrapped[2])
    return RobotState((quantize(x), quantize(y)), quantize(theta))


def track_reference(
    state: RobotState,
    desired_position,
    desired_velocity,
    gain: float,
    limits: RobotLimits,
    dt: float,
    observed: RobotState | None = None,
) -> RobotState:
    """Compute the tracking command from the observed pose and step once."""
    obs = observed if observed is not None else observe(state)
    v, omega = tracking_command(obs, desired_position, desired_velocity, gain, limits)
    v, omega = quantize(v), quantize(omega)
    return kinematics_step(state, v, omega, dt)

"""Conversions between lab units and nondimensional simulation units.

The reference testbed is a 2 m x 2 m arena identified with the full torus
span of 2*pi, and one simulation time unit equals 5 s, so a 0.01 time step
matches a 20 Hz camera.  When the arena is embedded as the inner quarter of
the fictitious extended domain its physical span maps to pi instead; the
converters take the span explicitly for that case.
"""

from __future__ import annotations

import math

ARENA_METERS = 2.0
TIME_UNIT_SECONDS = 5.0
FRAME_SECONDS = 0.05  # 20 Hz camera, dt = 0.01 time units


def meters_to_sim(meters: float, arena_span: float = 2.0 * math.pi) -> float:
    return meters * arena_span / ARENA_METERS

def sim_to_meters(x: float, arena_span: float = 2.0 * math.pi) -> float:
    return x * ARENA_METERS / arena_span

def seconds_to_sim(seconds: float) -> float:
    return seconds / TIME_UNIT_SECONDS

def sim_to_seconds(t: float) -> float:
    return t * TIME_UNIT_SECONDS

def mps_to_sim(mps: float, arena_span: float = 2.0 * math.pi) -> float:
    """Linear speed m/s -> sim length per sim time."""
    return meters_to_sim(mps, arena_span) * TIME_UNIT_SECONDS

def sim_to_mps(v: float, arena_span: float = 2.0 * math.pi) -> float:
    return sim_to_meters(v, arena_span) / TIME_UNIT_SECONDS

def radps_to_sim(radps: float) -> float:
    """Angular speed rad/s -> rad per sim time."""
    return radps * TIME_UNIT_SECONDS

def sim_to_radps(omega: float) -> float:
    return omega / TIME_UNIT_SECONDS

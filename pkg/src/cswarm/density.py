"""Density estimation and target density synthesis on the torus.

Agents become a continuum through a periodic kernel density estimate:
each position deposits unit mass into its nearest grid cell and the deposit
field is convolved with a wrapped Gaussian, applied spectrally as the exact
per-axis multiplier exp(-m^2 * bandwidth^2 / 2).  The zero mode is untouched,
so the estimate integrates to the agent count to machine precision.

Targets are separable von Mises mixtures

    rho_d(x) = Z * sum_k w_k exp(c1_k cos(x1 - a_k) + c2_k cos(x2 - b_k))

normalized numerically to a prescribed total mass.  Mode means can follow
piecewise programs (hold, straight segment, circular orbit) for tracking
scenarios, and a target built for the arena can be embedded into a
double-sized fictitious domain with a low floor outside the arena.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import Grid, ScalarField, integrate, wrap_point


@dataclass(frozen=True)
class KDEParams:
    """Bandwidth (standard deviation) of the wrapped-Gaussian estimator."""

    bandwidth: float = 0.4

    def __post_init__(self):
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError("KDEParams: bandwidth must be positive and finite")


def estimate_density(positions, params: KDEParams, grid: Grid) -> ScalarField:
    """Smoothed density of a set of positions, integrating to their count.

    positions: array (n, dim) of wrapped coordinates.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[1] != grid.dim:
        raise ValueError(
            f"estimate_density: positions must have shape (n, {grid.dim}), got {positions.shape}"
        )
    if not np.all(np.isfinite(positions)):
        raise ValueError("estimate_density: positions must be finite")
    positions = wrap_point(positions)

    deposits = np.zeros(grid.shape)
    idx = grid.nearest_index(positions)
    np.add.at(deposits, tuple(idx.T), 1.0 / grid.cell_volume)

    f_hat = np.fft.fftn(deposits)
    for ax in range(grid.dim):
        k = grid.axis_wavenumbers(ax)
        f_hat = f_hat * np.exp(-0.5 * (k * params.bandwidth) ** 2)
    vals = np.fft.ifftn(f_hat).real
    # the wrapped Gaussian is positive; clip float noise
    np.clip(vals, 0.0, None, out=vals)
    return ScalarField(grid, vals)


@dataclass(frozen=True)
class VonMisesMode:
    """One separable von Mises bump: means per axis, concentrations, weight."""

    mean_x: float = 0.0
    mean_y: float = 0.0
    conc_x: float = 1.0
    conc_y: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if self.conc_x < 0 or self.conc_y < 0:
            raise ValueError("VonMisesMode: concentrations must be >= 0")
        if self.weight <= 0:
            raise ValueError("VonMisesMode: weight must be positive")


def von_mises_2d(modes, grid: Grid, total_mass: float) -> ScalarField:
    """Planar von Mises mixture normalized to integrate to total_mass."""
    if grid.dim != 2:
        raise ValueError("von_mises_2d: requires a planar (dim=2) grid")
    modes = list(modes)
    if not modes:
        raise ValueError("von_mises_2d: at least one mode required")
    if not (total_mass > 0 and math.isfinite(total_mass)):
        raise ValueError("von_mises_2d: total_mass must be positive")
    X, Y = grid.meshes()
    vals = np.zeros(grid.shape)
    for m in modes:
        vals += m.weight * np.exp(
            m.conc_x * np.cos(X - m.mean_x) + m.conc_y * np.cos(Y - m.mean_y)
        )
    raw = ScalarField(grid, vals)
    return ScalarField(grid, vals * (total_mass / integrate(raw)))


# --- mean trajectories ------------------------------------------------------


@dataclass(frozen=True)
class Hold:
    """Mean stays put for duration time units."""

    duration: float


@dataclass(frozen=True)
class Line:
    """Mean moves at constant velocity for duration time units."""

    velocity: tuple
    duration: float


@dataclass(frozen=True)
class Orbit:
    """Mean circles the given center at a constant angular rate.

    Radius and entry angle follow from the position at phase entry, so the
    path stays continuous.  An unbounded duration ends the program.
    """

    center: tuple = (0.0, 0.0)
    rate: float = math.pi / 4
    duration: float = math.inf


@dataclass(frozen=True)
class MeanPath:
    """Piecewise program for one mode's mean; empty phases means static."""

    phases: tuple = ()


@dataclass(frozen=True)
class TargetProgram:
    """Time-dependent target: modes, per-mode mean paths, total mass."""

    modes: tuple
    total_mass: float
    paths: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.modes:
            raise ValueError("TargetProgram: at least one mode required")
        if self.paths and len(self.paths) != len(self.modes):
            raise ValueError("TargetProgram: paths must be empty or match the mode count")
        if not (self.total_mass > 0 and math.isfinite(self.total_mass)):
            raise ValueError("TargetProgram: total_mass must be positive")

    @property
    def is_static(self) -> bool:
        return all(not p.phases for p in self.paths) if self.paths else True


def _walk_path(start, path: MeanPath, t: float):
    x = np.array(start, dtype=float)
    remaining = t
    for phase in path.phases:
        if remaining <= 0.0:
            break
        span = min(remaining, phase.duration)
        if isinstance(phase, Hold):
            pass
        elif isinstance(phase, Line):
            x = x + span * np.asarray(phase.velocity, dtype=float)
        elif isinstance(phase, Orbit):
            center = np.asarray(phase.center, dtype=float)
            rel = x - center
            radius = float(np.hypot(rel[0], rel[1]))
            angle = math.atan2(rel[1], rel[0]) + phase.rate * span
            x = center + radius * np.array([math.cos(angle), math.sin(angle)])
        else:
            raise TypeError(f"unknown path phase {phase!r}")
        remaining -= span
    return x


def means_at(program: TargetProgram, t: float) -> np.ndarray:
    """Mode means at time t, shape (n_modes, 2), wrapped into the domain."""
    if t < 0:
        raise ValueError("means_at: t must be >= 0")
    out = []
    paths = program.paths or tuple(MeanPath() for _ in program.modes)
    for mode, path in zip(program.modes, paths):
        out.append(_walk_path((mode.mean_x, mode.mean_y), path, t))
    return wrap_point(np.array(out))


def target_density(program: TargetProgram, t: float, grid: Grid) -> ScalarField:
    """Target field at time t: the mixture with means advanced along paths."""
    means = means_at(program, t)
    moved = [
        VonMisesMode(m[0], m[1], mode.conc_x, mode.conc_y, mode.weight)
        for mode, m in zip(program.modes, means)
    ]
    return von_mises_2d(moved, grid, program.total_mass)


# --- fictitious extended domain ---------------------------------------------

_TAPER_CELLS = 4


def embed_extended(inner: ScalarField, floor: float) -> ScalarField:
    """Embed an arena-sized field into a double-sized fictitious domain.

    The output grid has 2G cells per axis over the same canonical torus, so
    the arena occupies the central quarter.  Outside the arena the density
    sits at the floor value; a cosine taper over a few cells of the arena rim
    blends the two levels.  The result is renormalized to the inner mass.
    """
    if not (floor > 0 and math.isfinite(floor)):
        raise ValueError("embed_extended: floor must be positive and finite")
    small = inner.grid
    big = Grid(small.dim, 2 * small.cells)
    total = integrate(inner)

    ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(_TAPER_CELLS) + 0.5) / _TAPER_CELLS))
    window_1d = np.ones(small.cells)
    window_1d[:_TAPER_CELLS] = ramp
    window_1d[-_TAPER_CELLS:] = ramp[::-1]

    out = np.full(big.shape, float(floor))
    lo = small.cells // 2
    hi = lo + small.cells
    if small.dim == 1:
        block = floor + (inner.values - floor) * window_1d
        out[lo:hi] = block
    else:
        window = np.outer(window_1d, window_1d)
        block = floor + (inner.values - floor) * window
        out[lo:hi, lo:hi] = block

    fld = ScalarField(big, out)
    return ScalarField(big, out * (total / integrate(fld)))

"""Continuum oracle: direct integration of the controlled mass balance.

Validates the macroscopic theory without agents.  The density obeys

    rho_t + div(rho * V) = q,     V = (kernel * rho) / M,

with M the (conserved) total mass, the same mean-field convention the
control law and the agents use; with it the dynamics are invariant to the
overall mass scale.  The equation is discretized pseudo-spectrally
(2/3-rule dealiasing on the advective flux)
with forward Euler in time under the advective stability bound
dt <= 0.5 * spacing / max|V|.  The desired density is co-integrated under
its own flux with q = 0, which is exactly the regime in which the feedback
source makes the error contract at the control gain:

    e_{n+1} = (1 - dt * K_p) e_n  (up to dealiasing residue on smooth data).

A midpoint stepper exists for refinement studies only; trials and the
acceptance runs use Euler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control import ControlGains, control_source, velocity_field
from .density import TargetProgram, target_density
from .domain import Grid, ScalarField, VectorField, integrate, spectral_divergence
from .kernels import KernelSpec

EULER = "euler"
MIDPOINT = "midpoint"


@dataclass
class MacroState:
    rho: ScalarField
    t: float = 0.0


def _dealias_mask(grid: Grid) -> np.ndarray:
    keep = np.ones(grid.shape, dtype=bool)
    cutoff = grid.cells / 3.0
    for ax in range(grid.dim):
        keep = keep & (np.abs(grid.axis_wavenumbers(ax)) <= cutoff)
    return keep


def _dealias(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.ifftn(np.where(_dealias_mask(grid), np.fft.fftn(values), 0.0)).real


def advective_divergence(rho: ScalarField, velocity: VectorField) -> ScalarField:
    """div(rho * V) with 2/3-rule dealiasing of the quadratic product."""
    grid = rho.grid
    r = _dealias(rho.values, grid)
    flux = np.empty_like(velocity.values)
    for c in range(grid.dim):
        flux[..., c] = r * _dealias(velocity.values[..., c], grid)
    div = spectral_divergence(VectorField(grid, flux))
    return ScalarField(grid, _dealias(div.values, grid))


def stability_bound(grid: Grid, velocity: VectorField) -> float:
    vmax = float(np.abs(velocity.values).max())
    if vmax == 0.0:
        return math.inf
    return 0.5 * grid.spacing / vmax


_UNDERSHOOT_TOL = 1e-8


def macro_step(
    state: MacroState,
    kernel: KernelSpec,
    source: ScalarField | None,
    dt: float,
    scheme: str = EULER,
) -> MacroState:
    """One explicit step of rho_t = -div(rho V) + q.

    Rejects steps beyond the advective stability bound.  Tiny negative
    undershoots are clipped and the mass renormalized; larger ones abort.
    """
    if dt <= 0:
        raise ValueError("macro_step: dt must be positive")
    grid = state.rho.grid
    q = source.values if source is not None else 0.0
    mass = abs(integrate(state.rho))
    scale = mass if mass > 0 else 1.0

    def rhs(rho: ScalarField) -> np.ndarray:
        vel = velocity_field(rho, kernel, mass_scale=scale)
        bound = stability_bound(grid, vel)
        if dt > bound:
            raise ValueError(
                f"macro_step: dt={dt:g} exceeds the stability bound {bound:g} "
                f"(0.5 * spacing / max|V|)"
            )
        return -advective_divergence(rho, vel).values + q

    if scheme == EULER:
        new_vals = state.rho.values + dt * rhs(state.rho)
    elif scheme == MIDPOINT:
        half = ScalarField(grid, state.rho.values + 0.5 * dt * rhs(state.rho))
        new_vals = state.rho.values + dt * rhs(half)
    else:
        raise ValueError(f"macro_step: unknown scheme {scheme!r}")

    low = float(new_vals.min())
    if low < 0.0:
        scale = max(abs(integrate(state.rho)) / (2.0 * math.pi) ** grid.dim, 1.0)
        if -low > _UNDERSHOOT_TOL * scale:
            raise ValueError(
                f"macro_step: negative density {low:.3e} beyond the undershoot tolerance"
            )
        mass_before = new_vals.sum()
        np.clip(new_vals, 0.0, None, out=new_vals)
        after = new_vals.sum()
        if after > 0:
            new_vals *= mass_before / after
    return MacroState(ScalarField(grid, new_vals), t=state.t + dt)


def run_controlled_macro(
    rho0: ScalarField,
    program: TargetProgram,
    kernel: KernelSpec,
    gains: ControlGains,
    duration: float,
    dt: float,
    scheme: str = EULER,
):
    """Co-integrate rho (controlled) and rho_d (reference flow) and record
    the error-norm decay.

    The desired density starts from the program's profile at t = 0 and then
    evolves under its own interaction flux, the regime of the contraction
    law.  Returns (times, error_l2) arrays of length n_steps + 1.
    """
    if duration <= 0:
        raise ValueError("run_controlled_macro: duration must be positive")
    grid = rho0.grid
    n_steps = int(round(duration / dt))
    state = MacroState(rho0, 0.0)
    desired = MacroState(target_density(program, 0.0, grid), 0.0)

    times = np.zeros(n_steps + 1)
    errors = np.zeros(n_steps + 1)

    def error_norm(a: ScalarField, b: ScalarField) -> float:
        diff = b.values - a.values
        return float(np.sqrt(np.sum(diff * diff) * grid.cell_volume))

    errors[0] = error_norm(state.rho, desired.rho)
    for n in range(n_steps):
        err = ScalarField(grid, desired.rho.values - state.rho.values)
        scale = abs(integrate(desired.rho)) or 1.0
        vel_desired = velocity_field(desired.rho, kernel, mass_scale=scale)
        vel_error = velocity_field(err, kernel, mass_scale=scale)
        q = control_source(err, state.rho, vel_desired, vel_error, gains)
        state = macro_step(state, kernel, q, dt, scheme=scheme)
        desired = macro_step(desired, kernel, None, dt, scheme=scheme)
        times[n + 1] = state.t
        errors[n + 1] = error_norm(state.rho, desired.rho)
    return times, errors

"""Macroscopic density control: source law and curl-free flux closure.

Given an estimated density rho and a desired density rho_d (equal masses),
the error field is e = rho_d - rho and the feedback source is

    q = gain * e - div(e * Vd) - div(rho * Ve)

where V = (kernel * rho)/M, Vd = (kernel * rho_d)/M, Ve = (kernel * e)/M
are circular convolutions against the periodized interaction kernel,
scaled by the swarm mass M.  The scaling matches agents that feel the
average, not the sum, of pairwise forces; without it the self-interaction
flux of a concentrated target at M ~ 100 overwhelms any feasible feedback
(see the closed-loop equilibrium e = div(rho_d Vd)/gain).  Along the
closed loop this makes the continuum error obey de/dt = -gain * e.

The source is realized as a velocity command by closing w = rho * U with
div w = -q and curl w = 0, i.e. w = -grad(phi) with the periodic Poisson
solve lap(phi) = q done in Fourier space: coefficient m gets -q_m / |m|^2,
the zero mode is fixed to zero (q must have zero mean).  Commands follow as
U = w / max(rho, floor); they are consumed at agent positions, where the
density is bounded away from zero, so the floor only guards empty regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    TWO_PI,
    Grid,
    ScalarField,
    VectorField,
    circ_conv,
    integrate,
    sample_bilinear,
    spectral_divergence,
    spectral_gradient,
)
from .kernels import KernelSpec, kernel_field


@dataclass(frozen=True)
class ControlGains:
    """Feedback gain and numerical knobs of the closure.

    K_p: proportional gain on the density error.
    fourier_truncation: modes per axis retained in the Poisson solve; None
        keeps the full grid band.
    density_floor: clamp used when dividing the flux by the density; None
        resolves to 1e-3 times the mean density at the point of use.
    """

    K_p: float = 5.0
    fourier_truncation: int | None = None
    density_floor: float | None = None
    zero_mode_rtol: float = 1e-6

    def __post_init__(self):
        if not (self.K_p > 0 and math.isfinite(self.K_p)):
            raise ValueError("ControlGains: K_p must be positive and finite")
        if self.fourier_truncation is not None and self.fourier_truncation < 2:
            raise ValueError("ControlGains: fourier_truncation must be >= 2")
        if self.density_floor is not None and not (self.density_floor > 0):
            raise ValueError("ControlGains: density_floor must be positive")
        if not (self.zero_mode_rtol > 0):
            raise ValueError("ControlGains: zero_mode_rtol must be positive")


@dataclass(frozen=True)
class ControlFields:
    """All per-frame fields produced by one control step."""

    interaction: VectorField          # kernel * rho
    interaction_desired: VectorField  # kernel * rho_d
    interaction_error: VectorField    # kernel * (rho_d - rho)
    source: ScalarField               # q
    potential: ScalarField            # phi with lap(phi) = q
    flux: VectorField                 # w = -grad(phi)
    command: VectorField              # U = w / max(rho, floor)


def velocity_field(rho: ScalarField, kernel: KernelSpec, mass_scale: float = 1.0) -> VectorField:
    """Interaction velocity (kernel * rho) / mass_scale.

    mass_scale carries the mean-field normalization; it is a fixed scalar
    (the swarm mass), never the mass of `rho` itself, so zero-mass fields
    like the density error stay well-defined.
    """
    if not (mass_scale > 0 and math.isfinite(mass_scale)):
        raise ValueError("velocity_field: mass_scale must be positive and finite")
    conv = circ_conv(kernel_field(kernel, rho.grid), rho)
    if mass_scale == 1.0:
        return conv
    return VectorField(conv.grid, conv.values / mass_scale)


def resolve_density_floor(gains: ControlGains, mass: float, grid: Grid) -> float:
    if gains.density_floor is not None:
        return gains.density_floor
    return 1e-3 * mass / TWO_PI**grid.dim


def control_source(
    error: ScalarField,
    rho: ScalarField,
    interaction_desired: VectorField,
    interaction_error: VectorField,
    gains: ControlGains,
) -> ScalarField:
    """Feedback source q = K_p e - div(e Vd) - div(rho Ve)."""
    grid = error.grid
    term_d = spectral_divergence(
        VectorField(grid, error.values[..., None] * interaction_desired.values)
    )
    term_e = spectral_divergence(
        VectorField(grid, rho.values[..., None] * interaction_error.values)
    )
    return ScalarField(grid, gains.K_p * error.values - term_d.values - term_e.values)


def _truncation_mask(grid: Grid, modes: int) -> np.ndarray:
    """Keep per-axis wavenumbers strictly below modes/2 in magnitude."""
    keep = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        k = grid.axis_wavenumbers(ax)
        keep = keep & (np.abs(k) < modes / 2.0)
    return keep


def poisson_invert(q: ScalarField, gains: ControlGains) -> tuple:
    """Solve lap(phi) = q periodically and return (phi, w = -grad(phi)).

    q must have (numerically) zero mean; the free constant is fixed by
    zeroing the Fourier zero mode.
    """
    grid = q.grid
    mean = float(q.values.mean())
    rms = float(np.sqrt(np.mean(q.values**2)))
    if abs(mean) > gains.zero_mode_rtol * rms and rms > 0:
        raise ValueError(
            f"poisson_invert: source mean {mean:.3e} exceeds tolerance "
            f"{gains.zero_mode_rtol:.1e} * rms {rms:.3e}"
        )
    q_hat = np.fft.fftn(q.values)
    k_sq = grid.wavenumber_sq
    safe = np.where(k_sq == 0.0, 1.0, k_sq)
    phi_hat = -q_hat / safe
    phi_hat[(0,) * grid.dim] = 0.0
    if gains.fourier_truncation is not None and gains.fourier_truncation < grid.cells:
        phi_hat = np.where(_truncation_mask(grid, gains.fourier_truncation), phi_hat, 0.0)
    phi = ScalarField(grid, np.fft.ifftn(phi_hat).real)
    grad = spectral_gradient(phi)
    flux = VectorField(grid, -grad.values)
    return phi, flux


def flux_to_velocity(flux: VectorField, rho: ScalarField, gains: ControlGains) -> VectorField:
    """Divide the mass flux by the (floored) density to get commands."""
    floor = resolve_density_floor(gains, integrate(rho), rho.grid)
    denom = np.maximum(rho.values, floor)
    return VectorField(rho.grid, flux.values / denom[..., None])


def control_step(
    rho: ScalarField,
    rho_desired: ScalarField,
    kernel: KernelSpec,
    gains: ControlGains,
) -> ControlFields:
    """One full control evaluation from matched density fields."""
    if rho.grid != rho_desired.grid:
        raise ValueError("control_step: density fields live on different grids")
    mass = integrate(rho)
    mass_d = integrate(rho_desired)
    if abs(mass - mass_d) > 1e-6 * max(abs(mass_d), 1e-300):
        raise ValueError(
            f"control_step: density masses differ ({mass:.9e} vs {mass_d:.9e})"
        )
    grid = rho.grid
    error = ScalarField(grid, rho_desired.values - rho.values)
    scale = mass_d if mass_d > 0 else 1.0
    interaction = velocity_field(rho, kernel, mass_scale=scale)
    interaction_desired = velocity_field(rho_desired, kernel, mass_scale=scale)
    interaction_error = velocity_field(error, kernel, mass_scale=scale)
    source = control_source(error, rho, interaction_desired, interaction_error, gains)
    potential, flux = poisson_invert(source, gains)
    command = flux_to_velocity(flux, rho, gains)
    return ControlFields(
        interaction=interaction,
        interaction_desired=interaction_desired,
        interaction_error=interaction_error,
        source=source,
        potential=potential,
        flux=flux,
        command=command,
    )


def microscopic_inputs(command: VectorField, positions) -> np.ndarray:
    """Sample the command field at agent positions, shape (n, dim)."""
    positions = np.asarray(positions, dtype=float)
    return np.atleast_2d(sample_bilinear(command, positions))

"""Shared test utilities: random smooth fields and direct-sum oracles.

The oracles here are deliberately slow and dumb (explicit loops, image
sums); every spectral shortcut in the package is checked against one of
them somewhere.
"""

from __future__ import annotations

import itertools

import numpy as np

from cswarm.domain import Grid, ScalarField, VectorField


def smooth_field(grid: Grid, rng, band: float = 6.0, zero_mean: bool = False) -> ScalarField:
    """Random band-limited field: white noise through a Gaussian spectral filter.

    Modes past the 2/3-dealias cutoff are zeroed outright so that spectral
    identities (gradient of a potential, divergence of a flux) hold to
    roundoff on the grid, Nyquist included.
    """
    noise = rng.standard_normal(grid.shape)
    f_hat = np.fft.fftn(noise)
    cutoff = grid.cells / 3.0
    for ax in range(grid.dim):
        k = grid.axis_wavenumbers(ax)
        f_hat = f_hat * np.exp(-0.5 * (k / band) ** 2) * (np.abs(k) <= cutoff)
    vals = np.fft.ifftn(f_hat).real
    if zero_mean:
        vals = vals - vals.mean()
    return ScalarField(grid, vals)


def direct_circ_conv(kernel_field: VectorField, weight: ScalarField) -> np.ndarray:
    """O(G^{2d}) reference for circ_conv; kernel origin sits at index G//2."""
    grid = weight.grid
    G = grid.cells
    half = G // 2
    w = weight.values
    K = kernel_field.values
    out = np.zeros_like(K)
    if grid.dim == 1:
        for n in range(G):
            for m in range(G):
                out[n] += K[(n - m + half) % G] * w[m]
    else:
        for n1, n2 in itertools.product(range(G), range(G)):
            acc = np.zeros(2)
            for m1, m2 in itertools.product(range(G), range(G)):
                acc += K[(n1 - m1 + half) % G, (n2 - m2 + half) % G] * w[m1, m2]
            out[n1, n2] = acc
    return out * grid.cell_volume


def direct_circ_conv_gather(kernel_field: VectorField, weight: ScalarField) -> np.ndarray:
    """Vectorized direct sum (gather + einsum, no FFT); usable up to G ~ 48."""
    grid = weight.grid
    G = grid.cells
    half = G // 2
    A = (np.arange(G)[:, None] - np.arange(G)[None, :] + half) % G
    if grid.dim == 1:
        out = np.einsum("nmc,m->nc", kernel_field.values[A], weight.values)
    else:
        T = kernel_field.values[A[:, :, None, None], A[None, None, :, :]]
        out = np.einsum("nmpqc,mq->npc", T, weight.values)
    return out * grid.cell_volume


def wrapped_gaussian_1d(delta: np.ndarray, sigma: float, images: int = 8) -> np.ndarray:
    """Periodic Gaussian density on the circle via a truncated image sum."""
    total = np.zeros_like(delta, dtype=float)
    for j in range(-images, images + 1):
        d = delta + 2.0 * np.pi * j
        total += np.exp(-0.5 * (d / sigma) ** 2)
    return total / (np.sqrt(2.0 * np.pi) * sigma)


def direct_kde(positions: np.ndarray, bandwidth: float, grid: Grid) -> np.ndarray:
    """Reference estimator: deposit to nearest node, then a wrapped-Gaussian sum.

    Mirrors the production deposit step exactly (the quantization is part of
    the estimator's definition) but evaluates the smoothing kernel directly
    instead of spectrally.
    """
    axis = grid.axis()
    idx = grid.nearest_index(positions)
    out = np.zeros(grid.shape)
    if grid.dim == 1:
        for (i,) in idx:
            out += wrapped_gaussian_1d(axis - axis[i], bandwidth)
        return out
    for i, j in idx:
        gx = wrapped_gaussian_1d(axis - axis[i], bandwidth)
        gy = wrapped_gaussian_1d(axis - axis[j], bandwidth)
        out += np.outer(gx, gy)
    return out

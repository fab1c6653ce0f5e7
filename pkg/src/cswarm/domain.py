"""Periodic-domain geometry and spectral calculus on uniform grids.

Everything downstream (interaction kernels, densities, control fields) lives
on the torus [-pi, pi)^d, d in {1, 2}, sampled on a uniform grid of G nodes
per axis at -pi + k * (2*pi/G).  Fields are implicitly trigonometric
interpolants: derivatives, circular convolutions and the Poisson solve are
all computed through the FFT and are exact for resolved modes.

Array layout: a scalar field has shape (G,) * d with axis i holding
coordinate x_{i+1}; a vector field appends a trailing component axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_point(x):
    """Wrap coordinates into the fundamental domain [-pi, pi).

    Accepts scalars or arrays (any leading shape); the boundary maps to
    -pi, so odd multiples of pi come back as exactly -pi.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("wrap_point: input must be finite")
    y = np.mod(x + np.pi, TWO_PI) - np.pi
    # mod can round onto the excluded right edge
    return np.where(y >= np.pi, -np.pi, y)


def wrapped_disp(a, b):
    """Shortest displacement a - b on the torus, componentwise.

    Ties at exactly half a period resolve to -pi.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return wrap_point(a - b)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-pi, pi)^dim with cells nodes per axis."""

    dim: int
    cells: int = 200

    def __post_init__(self):
        if self.dim == 3:
            raise ValueError(
                "Grid: dim=3 is not supported, only line (1) and planar (2) domains"
            )
        if self.dim not in (1, 2):
            raise ValueError(f"Grid: dim must be 1 or 2, got {self.dim}")
        if self.cells < 4 or self.cells % 2 != 0:
            raise ValueError(f"Grid: cells must be even and >= 4, got {self.cells}")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.cells

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple:
        return (self.cells,) * self.dim

    def axis(self) -> np.ndarray:
        return -np.pi + self.spacing * np.arange(self.cells)

    def meshes(self) -> list:
        """Coordinate arrays of shape (G,)*dim, one per axis (ij indexing)."""
        return list(np.meshgrid(*([self.axis()] * self.dim), indexing="ij"))

    def points(self) -> np.ndarray:
        """All node positions, shape (G,)*dim + (dim,)."""
        return np.stack(self.meshes(), axis=-1)

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, one 1-d array per axis (shared)."""
        return np.fft.fftfreq(self.cells, 1.0 / self.cells)

    def axis_wavenumbers(self, axis: int, zero_nyquist: bool = False) -> np.ndarray:
        """Wavenumbers along one axis, broadcastable to the grid shape.

        Odd-order spectral derivatives of real fields need the unmatched
        Nyquist mode dropped; zero_nyquist does that.
        """
        k = self.wavenumbers().copy()
        if zero_nyquist:
            k[self.cells // 2] = 0.0
        shape = [1] * self.dim
        shape[axis] = self.cells
        return k.reshape(shape)

    @cached_property
    def wavenumber_sq(self) -> np.ndarray:
        """|m|^2 on the full grid, shape (G,)*dim."""
        out = np.zeros(self.shape)
        for ax in range(self.dim):
            out = out + self.axis_wavenumbers(ax) ** 2
        return out

    def nearest_index(self, pts) -> np.ndarray:
        """Index of the grid node closest to each point, shape (..., dim)."""
        pts = np.asarray(pts, dtype=float)
        return (np.rint((pts + np.pi) / self.spacing).astype(int)) % self.cells


def _check_values(grid: Grid, values, expected_shape, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != expected_shape:
        raise ValueError(
            f"{what}: values shape {values.shape} does not match grid shape {expected_shape}"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what}: values must be finite")
    return values


@dataclass(frozen=True)
class ScalarField:
    """Scalar samples on a Grid, shape (G,)*dim."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_values(self.grid, self.values, self.grid.shape, "ScalarField")
        )

    @classmethod
    def uniform(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        """Sample fn(*coordinate_meshes) on the grid."""
        return cls(grid, np.asarray(fn(*grid.meshes()), dtype=float))


@dataclass(frozen=True)
class VectorField:
    """Vector samples on a Grid, shape (G,)*dim + (dim,)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        expected = self.grid.shape + (self.grid.dim,)
        object.__setattr__(
            self, "values", _check_values(self.grid, self.values, expected, "VectorField")
        )

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.shape + (grid.dim,)))

    @classmethod
    def from_components(cls, grid: Grid, comps) -> "VectorField":
        return cls(grid, np.stack([np.asarray(c, dtype=float) for c in comps], axis=-1))

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., i])


def _require_same_grid(a, b, what: str):
    if a.grid != b.grid:
        raise ValueError(f"{what}: fields live on different grids ({a.grid} vs {b.grid})")


def integrate(field: ScalarField) -> float:
    """Riemann sum over the torus: sum(values) * spacing^dim."""
    return float(field.values.sum() * field.grid.cell_volume)


def circ_conv(kernel_field: VectorField, weight: ScalarField) -> VectorField:
    """Circular convolution (kernel * weight)(x) = sum_z kernel(x - z) weight(z) h^d.

    The kernel field is read as samples of a displacement-dependent function
    on the grid nodes; the FFT product computes the periodic sum over all
    node pairs exactly (up to roundoff), scaled by the cell volume so the
    result approximates the integral against weight.
    """
    _require_same_grid(kernel_field, weight, "circ_conv")
    grid = weight.grid
    axes = tuple(range(grid.dim))
    # move the displacement-zero node (index G/2 per axis) to index 0
    shifted = np.fft.ifftshift(kernel_field.values, axes=axes)
    w_hat = np.fft.fftn(weight.values)
    out = np.empty_like(kernel_field.values)
    for c in range(grid.dim):
        out[..., c] = np.fft.ifftn(np.fft.fftn(shifted[..., c]) * w_hat).real
    out *= grid.cell_volume
    return VectorField(grid, out)


def spectral_gradient(field: ScalarField) -> VectorField:
    """Gradient via FFT: mode m is multiplied by i*m, Nyquist dropped."""
    grid = field.grid
    f_hat = np.fft.fftn(field.values)
    comps = []
    for ax in range(grid.dim):
        k = grid.axis_wavenumbers(ax, zero_nyquist=True)
        comps.append(np.fft.ifftn(1j * k * f_hat).real)
    return VectorField.from_components(grid, comps)


def spectral_divergence(field: VectorField) -> ScalarField:
    """Divergence via FFT, same Nyquist convention as spectral_gradient."""
    grid = field.grid
    out = np.zeros(grid.shape)
    for ax in range(grid.dim):
        k = grid.axis_wavenumbers(ax, zero_nyquist=True)
        out += np.fft.ifftn(1j * k * np.fft.fftn(field.values[..., ax])).real
    return ScalarField(grid, out)


def spectral_laplacian(field: ScalarField) -> ScalarField:
    """Laplacian via FFT; the even derivative keeps the Nyquist mode."""
    grid = field.grid
    f_hat = np.fft.fftn(field.values)
    return ScalarField(grid, np.fft.ifftn(-grid.wavenumber_sq * f_hat).real)


def spectral_curl_2d(field: VectorField) -> ScalarField:
    """Scalar curl d(w2)/dx1 - d(w1)/dx2 of a planar vector field."""
    grid = field.grid
    if grid.dim != 2:
        raise ValueError("spectral_curl_2d: requires a planar (dim=2) field")
    k1 = grid.axis_wavenumbers(0, zero_nyquist=True)
    k2 = grid.axis_wavenumbers(1, zero_nyquist=True)
    d1w2 = np.fft.ifftn(1j * k1 * np.fft.fftn(field.values[..., 1])).real
    d2w1 = np.fft.ifftn(1j * k2 * np.fft.fftn(field.values[..., 0])).real
    return ScalarField(grid, d1w2 - d2w1)


def _interp_weights(grid: Grid, pts: np.ndarray):
    """Lower corner indices, upper corner indices and fractions per axis."""
    t = (pts + np.pi) / grid.spacing
    lo = np.floor(t).astype(int)
    frac = t - lo
    lo %= grid.cells
    hi = (lo + 1) % grid.cells
    return lo, hi, frac


def sample_bilinear(field, pts):
    """Periodic multilinear interpolation of a field at arbitrary points.

    pts has shape (dim,) or (n, dim); the result drops or keeps the leading
    axis accordingly (vector fields add the component axis).
    """
    grid = field.grid
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != grid.dim:
        raise ValueError(f"sample_bilinear: points have dim {pts.shape[-1]}, grid has {grid.dim}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("sample_bilinear: points must be finite")
    lo, hi, frac = _interp_weights(grid, pts)
    vals = field.values
    if grid.dim == 1:
        f = frac[:, 0]
        out = vals[lo[:, 0]] * (1.0 - f)[..., None] if vals.ndim > 1 else vals[lo[:, 0]] * (1.0 - f)
        out = out + (vals[hi[:, 0]] * f[..., None] if vals.ndim > 1 else vals[hi[:, 0]] * f)
    else:
        fx, fy = frac[:, 0], frac[:, 1]
        if vals.ndim > 2:  # vector field
            fx = fx[:, None]
            fy = fy[:, None]
        out = (
            vals[lo[:, 0], lo[:, 1]] * (1.0 - fx) * (1.0 - fy)
            + vals[hi[:, 0], lo[:, 1]] * fx * (1.0 - fy)
            + vals[lo[:, 0], hi[:, 1]] * (1.0 - fx) * fy
            + vals[hi[:, 0], hi[:, 1]] * fx * fy
        )
    return out[0] if single else out

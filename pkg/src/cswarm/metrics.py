"""Error metrics and the per-trial trace record.

The headline metric is the L2 norm of the density error; trials report it
as a normalized percentage

    E_bar(t) = ||e(t)||^2 / max_s ||e(s)||^2 * 100

whose max over the trial is 100 by construction.  The true normalization
needs the whole series, so a provisional variant (running max) exists for
live logging and is reconciled when the trial ends.  A floored, normalized
KL divergence D(estimate || target) complements it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .domain import TWO_PI, ScalarField, integrate

CSV_COLUMNS = ["step", "t", "error_sq", "E_bar_provisional", "kl"]
CSV_COLUMNS_FINAL = CSV_COLUMNS + ["E_bar_final"]


def l2_error(rho: ScalarField, rho_desired: ScalarField) -> float:
    """L2 norm of rho_desired - rho over the torus."""
    if rho.grid != rho_desired.grid:
        raise ValueError("l2_error: fields live on different grids")
    diff = rho_desired.values - rho.values
    return float(np.sqrt(np.sum(diff * diff) * rho.grid.cell_volume))


def percent_error(error_sq) -> np.ndarray:
    """Series normalized by its global max, in percent; all-zero stays zero."""
    e = np.asarray(error_sq, dtype=float)
    if e.size == 0:
        return e.copy()
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("percent_error: series must be finite and nonnegative")
    peak = e.max()
    if peak == 0.0:
        return np.zeros_like(e)
    return e / peak * 100.0


def provisional_percent_error(error_sq) -> np.ndarray:
    """Streaming variant: each entry normalized by the running max so far."""
    e = np.asarray(error_sq, dtype=float)
    if e.size == 0:
        return e.copy()
    running = np.maximum.accumulate(e)
    out = np.zeros_like(e)
    nz = running > 0
    out[nz] = e[nz] / running[nz] * 100.0
    return out


def default_kl_floor(mass: float, dim: int) -> float:
    return 1e-9 * mass / TWO_PI**dim


def kl_divergence(rho: ScalarField, rho_desired: ScalarField, floor: float | None = None) -> float:
    """KL divergence D(rho || rho_desired) after flooring and normalizing.

    Both fields are clamped below at the floor (default 1e-9 of the mean
    density) and renormalized to probability densities, which keeps the
    divergence finite and nonnegative.
    """
    if rho.grid != rho_desired.grid:
        raise ValueError("kl_divergence: fields live on different grids")
    grid = rho.grid
    if floor is None:
        floor = default_kl_floor(integrate(rho), grid.dim)
    if not (floor > 0):
        raise ValueError("kl_divergence: floor must be positive")
    p = np.maximum(rho.values, floor)
    q = np.maximum(rho_desired.values, floor)
    p = p / (p.sum() * grid.cell_volume)
    q = q / (q.sum() * grid.cell_volume)
    return float(np.sum(p * np.log(p / q)) * grid.cell_volume)


@dataclass
class TrialTrace:
    """Per-frame series of one trial plus optional per-frame extras."""

    times: np.ndarray
    error_sq: np.ndarray
    kl: np.ndarray
    density_mass: np.ndarray | None = None
    e_bar: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.error_sq = np.asarray(self.error_sq, dtype=float)
        self.kl = np.asarray(self.kl, dtype=float)
        if self.density_mass is not None:
            self.density_mass = np.asarray(self.density_mass, dtype=float)
        n = len(self.times)
        if len(self.error_sq) != n or len(self.kl) != n:
            raise ValueError("TrialTrace: series lengths disagree")

    def __len__(self) -> int:
        return len(self.times)

    def finalize(self) -> "TrialTrace":
        # the percent metric is of the squared norm, matching the trace column
        self.e_bar = percent_error(self.error_sq)
        return self

    def to_csv(self, path) -> None:
        """Write the finalized trace; floats use repr-exact formatting."""
        if self.e_bar is None:
            self.finalize()
        provisional = provisional_percent_error(self.error_sq)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS_FINAL)
            for i in range(len(self)):
                writer.writerow(
                    [
                        i,
                        _fmt(self.times[i]),
                        _fmt(self.error_sq[i]),
                        _fmt(provisional[i]),
                        _fmt(self.kl[i]),
                        _fmt(self.e_bar[i]),
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "TrialTrace":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        trace = cls(
            times=[float(r["t"]) for r in rows],
            error_sq=[float(r["error_sq"]) for r in rows],
            kl=[float(r["kl"]) for r in rows],
        )
        if rows and "E_bar_final" in rows[0]:
            trace.e_bar = np.array([float(r["E_bar_final"]) for r in rows])
        return trace


def _fmt(x: float) -> str:
    return format(float(x), ".17g")

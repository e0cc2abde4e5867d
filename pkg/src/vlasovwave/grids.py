"""Uniform grids, gridded phase-space states and macroscopic densities."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameter


@dataclass(frozen=True)
class Grid1D:
    """Periodic-layout uniform grid: nodes ``lo + i*dx`` for i < n, dx = (hi-lo)/n."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.hi > self.lo:
            raise InvalidParameter(f"empty grid [{self.lo}, {self.hi}]")
        if self.n < 4:
            raise InvalidParameter("grid needs at least 4 nodes")

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.lo + self.dx * np.arange(self.n)

    @property
    def half_width(self) -> float:
        return min(abs(self.lo), abs(self.hi))

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.lo, self.hi, self.n * factor)


@dataclass(frozen=True)
class MacroDensity:
    grid: Grid1D
    values: np.ndarray = field(repr=False)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.dx)


@dataclass(frozen=True)
class PhaseSpaceState:
    """f(t, x_i, v_j) on a tensor grid; ``values[i, j]`` with x along axis 0."""

    x_grid: Grid1D
    v_grid: Grid1D
    values: np.ndarray = field(repr=False)
    time: float = 0.0
    clipped_mass: float = 0.0

    @property
    def cell(self) -> float:
        return self.x_grid.dx * self.v_grid.dx

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell)

    def density(self) -> MacroDensity:
        return MacroDensity(self.x_grid, self.values.sum(axis=1) * self.v_grid.dx)

    def lp_norm(self, p: float) -> float:
        if np.isinf(p):
            return float(np.abs(self.values).max(initial=0.0))
        return float((np.sum(np.abs(self.values) ** p) * self.cell) ** (1.0 / p))

    def with_values(self, values, time=None, clipped_mass=None) -> "PhaseSpaceState":
        return replace(self, values=values,
                       time=self.time if time is None else float(time),
                       clipped_mass=self.clipped_mass if clipped_mass is None else clipped_mass)

    def mesh(self):
        return np.meshgrid(self.x_grid.x, self.v_grid.x, indexing="ij")


def phase_bumps(x_grid: Grid1D, v_grid: Grid1D, bumps) -> PhaseSpaceState:
    """Sum of smooth compact bumps ``h * exp(1 - 1/(1 - s^2))``, s = |(x-x0)/rx, (v-v0)/rv|.

    ``bumps`` is an iterable of (x0, v0, rx, rv, height).  Height is the peak value.
    """
    X, V = np.meshgrid(x_grid.x, v_grid.x, indexing="ij")
    f = np.zeros_like(X)
    for x0, v0, rx, rv, h in bumps:
        if rx <= 0 or rv <= 0 or h < 0:
            raise InvalidParameter("phase bumps need positive radii and nonnegative height")
        s2 = ((X - x0) / rx) ** 2 + ((V - v0) / rv) ** 2
        inside = s2 < 1.0
        f[inside] += h * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    return PhaseSpaceState(x_grid, v_grid, f, 0.0)

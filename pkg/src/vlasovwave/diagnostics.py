"""Conserved quantities, moments and Wasserstein-1 distances."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InvalidParameter, UndefinedDistance
from .grids import MacroDensity, PhaseSpaceState

N_DIRECTIONS = 64
MASS_TOL = 1e-9


@dataclass
class DiagnosticsRecord:
    """One row of the run table.  Wave terms are ``nan`` when not tracked."""

    t: float
    mass: float
    l1: float
    l2: float
    linf: float
    kinetic: float
    external: float
    coupling: float
    wave_kinetic: float = np.nan
    wave_elastic: float = np.nan
    second_moment: float = 0.0
    clipped_mass: float = 0.0
    w1_ref: float = np.nan

    @property
    def has_wave(self) -> bool:
        return bool(np.isfinite(self.wave_kinetic) and np.isfinite(self.wave_elastic))

    @property
    def particle_energy(self) -> float:
        return self.kinetic + self.external + self.coupling

    @property
    def total(self) -> float:
        """Sum of the five energy terms (wave terms count as 0 when absent)."""
        w = self.wave_kinetic + self.wave_elastic if self.has_wave else 0.0
        return self.particle_energy + w


COLUMNS = [f.name for f in fields(DiagnosticsRecord)] + ["total"]


def records_to_table(records) -> np.ndarray:
    return np.array([[getattr(r, c) for c in COLUMNS] for r in records], dtype=float)


def total_energy(f: PhaseSpaceState, phi, V, wave_terms=None) -> DiagnosticsRecord:
    """Energy decomposition with the solver's own grid weights.

    kinetic = int f v^2/2, external = int f V, coupling = int f Phi and the
    optional ``wave_terms`` = (wave kinetic, wave elastic).
    """
    if phi is not None and phi.grid != f.x_grid:
        raise InvalidParameter("potential and phase-space grids differ")
    x, v = f.x_grid.x, f.v_grid.x
    cell = f.cell
    vals = f.values
    rho_dx = vals.sum(axis=1) * cell
    kin = float(np.sum(vals @ (0.5 * v * v)) * cell)
    ext = float(rho_dx @ V.V(x))
    coup = 0.0 if phi is None else float(rho_dx @ phi.values)
    m2 = float(rho_dx @ (x * x) + np.sum(vals @ (v * v)) * cell)
    wk, we = (np.nan, np.nan) if wave_terms is None else wave_terms
    return DiagnosticsRecord(f.time, f.mass, f.lp_norm(1), f.lp_norm(2), f.lp_norm(np.inf),
                             kin, ext, coup, wk, we, m2, f.clipped_mass)


def moments(f: PhaseSpaceState, orders, signed: bool = False) -> np.ndarray:
    """Rows (int |x|^k f, int |v|^k f) per order k; ``signed`` uses x^k, v^k."""
    orders = np.atleast_1d(np.asarray(orders, dtype=float))
    if np.any(orders < 0):
        raise InvalidParameter("moment orders must be nonnegative")
    x, v = f.x_grid.x, f.v_grid.x
    rx = f.values.sum(axis=1) * f.cell
    rv = f.values.sum(axis=0) * f.cell
    out = np.empty((orders.size, 2))
    for i, k in enumerate(orders):
        px = x**k if signed else np.abs(x) ** k
        pv = v**k if signed else np.abs(v) ** k
        out[i] = rx @ px, rv @ pv
    return out


# ----------------------------------------------------------------------------
# Wasserstein-1


def _w1_signed(points, signed_weights, order=None) -> float:
    """int |F_a - F_b| for a signed discrete measure on the line."""
    if order is None:
        order = np.argsort(points, kind="stable")
    p = points[order]
    cum = np.cumsum(signed_weights[order])[:-1]
    return float(np.sum(np.abs(cum) * np.diff(p)))


def w1_1d(xa, wa, xb, wb) -> float:
    """Exact W1 between two weighted point sets on the line (masses assumed equal)."""
    pts = np.concatenate([np.asarray(xa, float), np.asarray(xb, float)])
    w = np.concatenate([np.asarray(wa, float), -np.asarray(wb, float)])
    return _w1_signed(pts, w)


def directions(count: int = N_DIRECTIONS) -> np.ndarray:
    """Fixed equispaced unit vectors theta_k = (k + 1/2) pi / count on the half circle."""
    th = (np.arange(count) + 0.5) * np.pi / count
    return np.column_stack([np.cos(th), np.sin(th)])


_ORDER_CACHE: dict = {}


def _grid_orders(xg, vg, count):
    key = (xg, vg, count)
    hit = _ORDER_CACHE.get(key)
    if hit is None:
        X, V = np.meshgrid(xg.x, vg.x, indexing="ij")
        pts = np.column_stack([X.ravel(), V.ravel()])
        proj = pts @ directions(count).T
        orders = np.argsort(proj, axis=0, kind="stable")
        hit = (proj, orders)
        if len(_ORDER_CACHE) > 8:
            _ORDER_CACHE.clear()
        _ORDER_CACHE[key] = hit
    return hit


def sliced_w1(pa, wa, pb, wb, count: int = N_DIRECTIONS) -> float:
    """Mean over fixed directions of the exact 1D W1 of the projected clouds."""
    pts = np.vstack([np.asarray(pa, float), np.asarray(pb, float)])
    w = np.concatenate([np.asarray(wa, float), -np.asarray(wb, float)])
    proj = pts @ directions(count).T
    return float(np.mean([_w1_signed(proj[:, k], w) for k in range(count)]))


def _as_cloud(a):
    """(points, weights, kind) for the accepted inputs."""
    if isinstance(a, PhaseSpaceState):
        X, V = a.mesh()
        return np.column_stack([X.ravel(), V.ravel()]), a.values.ravel() * a.cell, "phase"
    if isinstance(a, MacroDensity):
        return a.grid.x, a.values * a.grid.dx, "line"
    pts, w = a
    pts = np.asarray(pts, dtype=float)
    return pts, np.asarray(w, dtype=float), "line" if pts.ndim == 1 else "phase"


def w1_cloud_density(points, weights, rho: MacroDensity) -> float:
    """Exact W1 between a weighted point cloud and a cell-uniform grid density.

    Node i of ``rho`` carries its mass uniformly on [x_i - dx/2, x_i + dx/2],
    so the density CDF is piecewise linear and int |F_a - F_b| is integrated
    exactly between consecutive breakpoints.
    """
    p = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(p, kind="stable")
    p, w = p[order], w[order]
    dx = rho.grid.dx
    edges = np.concatenate([rho.grid.x - 0.5 * dx, [rho.grid.x[-1] + 0.5 * dx]])
    Fe = np.concatenate([[0.0], np.cumsum(rho.values * dx)])
    z = np.unique(np.concatenate([p, edges]))
    Fa = np.concatenate([[0.0], np.cumsum(w)])[np.searchsorted(p, z[:-1], side="right")]
    Fb = np.interp(z, edges, Fe)
    d0, d1 = Fa - Fb[:-1], Fa - Fb[1:]
    L = np.diff(z)
    same = d0 * d1 >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (d0**2 + d1**2) / (2.0 * np.abs(d0 - d1))
    seg = np.where(same, 0.5 * np.abs(d0 + d1), np.where(np.isfinite(cross), cross, 0.0))
    return float(np.sum(L * seg))


def wasserstein1(a, b, count: int = N_DIRECTIONS) -> float:
    """W1 between two distributions.

    Accepts PhaseSpaceState (sliced W1 on phase space), MacroDensity or
    (points, weights) pairs; 1D inputs get the exact CDF formula.  Grid
    densities count as point masses at the nodes, except against a particle
    cloud where they are read as cell-uniform (see ``w1_cloud_density``).
    """
    if isinstance(a, PhaseSpaceState) and isinstance(b, PhaseSpaceState) \
            and a.x_grid == b.x_grid and a.v_grid == b.v_grid:
        ma, mb = a.mass, b.mass
        _check_mass(ma, mb)
        wa = a.values.ravel() * a.cell
        wb = b.values.ravel() * (b.cell * ma / mb)
        proj, orders = _grid_orders(a.x_grid, a.v_grid, count)
        d = wa - wb
        return float(np.mean([_w1_signed(proj[:, k], d, orders[:, k]) for k in range(count)]))
    if isinstance(b, MacroDensity) and isinstance(a, tuple):
        a, b = b, a
    if isinstance(a, MacroDensity) and isinstance(b, tuple):
        pts, w = (np.asarray(u, dtype=float) for u in b)
        ma, mb = a.mass, float(w.sum())
        _check_mass(ma, mb)
        return w1_cloud_density(pts, w * (ma / mb), a)
    pa, wa, ka = _as_cloud(a)
    pb, wb, kb = _as_cloud(b)
    if ka != kb:
        raise InvalidParameter("cannot compare a line distribution with a phase-space one")
    ma, mb = float(wa.sum()), float(wb.sum())
    _check_mass(ma, mb)
    wb = wb * (ma / mb)
    if ka == "line":
        return w1_1d(pa, wa, pb, wb)
    return sliced_w1(pa, wa, pb, wb, count)


def _check_mass(ma, mb):
    if not (ma > 0 and mb > 0):
        raise UndefinedDistance("W1 is undefined for zero-mass inputs")
    if abs(ma - mb) > MASS_TOL * max(ma, mb):
        warnings.warn(f"masses differ ({ma:.12g} vs {mb:.12g}); renormalising the second",
                      RuntimeWarning, stacklevel=3)


def l1_density_distance(a: MacroDensity, b: MacroDensity) -> float:
    if a.grid != b.grid:
        raise InvalidParameter("densities live on different grids")
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.dx)

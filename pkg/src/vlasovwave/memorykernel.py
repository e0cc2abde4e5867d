"""Memory kernels of the wave-mediated interaction.

With ``A_n = |S^{n-1}| / (2 pi)^n`` and ``g(r) = r^{n-2} |sigma2_hat(r)|^2``,

    q(t)    = A_n int_0^inf sin(r t) g(r) dr,
    p(t; c) = q(c t) / c,
    kappa   = A_n int_0^inf g(r) / r dr          (n >= 3),
    K       = A_n int_0^inf |g''(r)| dr          (n >= 3, |q(t)| <= K / t^2).

The sine integrals are evaluated with a Filon-Simpson rule on a uniform
wavenumber grid: the amplitude ``g`` is smooth and the oscillation is
integrated exactly, so large ``t`` costs nothing extra.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from ._quad import filon, simpson_uniform, sphere_area
from .errors import DivergentConstant, ExtendTable, InvalidParameter, UnsupportedDimension
from .formfactors import FormFactor, radial_fourier

SPECTRAL_NODES = 8193
CUTOFF_REL = 1e-14


@dataclass(frozen=True)
class SpectralProfile:
    n: int
    h: float
    r: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    fourier_sq: np.ndarray = field(repr=False)
    weight: float
    cutoff: float

    @property
    def nodes(self) -> int:
        return int(self.r.size)


@lru_cache(maxsize=32)
def spectral_profile(sigma2: FormFactor, nodes: int = SPECTRAL_NODES) -> SpectralProfile:
    """Sample ``g(r) = r^{n-2} |sigma2_hat(r)|^2`` up to the wavenumber cut-off."""
    n = sigma2.dim
    if n < 2:
        raise UnsupportedDimension(f"memory kernel needs n >= 2, got {n}")
    weight = sphere_area(n) / (2.0 * np.pi) ** n
    R = sigma2.support_radius
    if sigma2.is_zero:
        r = np.linspace(0.0, 1.0, nodes)
        return SpectralProfile(n, r[1], r, np.zeros_like(r), np.zeros_like(r), weight, 1.0)
    coarse = np.linspace(0.0, 500.0 / R, 2001)
    dens = coarse ** (n - 1) * radial_fourier(sigma2, coarse) ** 2
    above = np.nonzero(dens >= CUTOFF_REL * dens.max())[0]
    cutoff = float(coarse[min(above[-1] + 1, coarse.size - 1)])
    r = np.linspace(0.0, cutoff, nodes)
    F2 = radial_fourier(sigma2, r) ** 2
    return SpectralProfile(n, float(r[1] - r[0]), r, r ** (n - 2) * F2, F2, weight, cutoff)


def _check_dim(sigma2: FormFactor, n):
    if n is not None and n != sigma2.dim:
        raise InvalidParameter(f"sigma2 lives in dimension {sigma2.dim}, not {n}")
    return sigma2.dim


def q_values(t, sigma2: FormFactor):
    """q at an array of times (vectorised)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameter("time must be nonnegative")
    sp = spectral_profile(sigma2)
    out = sp.weight * filon(sp.g, 0.0, sp.h, t, kind="sin")
    out = np.where(t == 0.0, 0.0, out)
    return out.reshape(t.shape)


def eval_kernel(t, c, sigma2: FormFactor):
    """p(t; c) = A_n int sin(c r t)/(c r) r^{n-1} |sigma2_hat|^2 dr; c = 1 gives q.

    The integrand is assembled here in its speed-c form, independently of
    ``q_values``; ``t`` and ``c`` broadcast against each other.
    """
    t, c = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(c, dtype=float))
    if not np.all(c > 0.0):
        raise InvalidParameter(f"wave speed must be positive, got {c.min()}")
    if np.any(t < 0):
        raise InvalidParameter("time must be nonnegative")
    sp = spectral_profile(sigma2)
    r = sp.r
    # r^{n-1}/r without dividing at the origin
    amp = np.zeros_like(r)
    amp[1:] = r[1:] ** (sp.n - 1) * sp.fourier_sq[1:] / r[1:]
    amp[0] = sp.fourier_sq[0] if sp.n == 2 else 0.0
    val = sp.weight * filon(amp, 0.0, sp.h, (c * t).ravel(), kind="sin").reshape(t.shape) / c
    val = np.where(t == 0.0, 0.0, val)
    return float(val) if val.ndim == 0 else val


def kappa(sigma2: FormFactor, n: int | None = None) -> float:
    """kappa = A_n int r^{n-3} |sigma2_hat|^2 dr; infinite for n <= 2."""
    n = _check_dim(sigma2, n)
    if n <= 2:
        raise DivergentConstant(f"kappa is infinite for n = {n}; need n >= 3")
    sp = spectral_profile(sigma2)
    integrand = sp.r ** (n - 3) * radial_fourier(sigma2, sp.r) ** 2
    return float(sp.weight * simpson_uniform(integrand, sp.h))


def tail_constant(sigma2: FormFactor, n: int | None = None) -> float:
    """K = A_n int |g''| dr from centred second differences plus one Richardson step.

    Differences are taken on the tabulated profile at spacings h and 2h;
    g is extended to r < 0 by parity (g(-r) = (-1)^n g(r)).
    """
    n = _check_dim(sigma2, n)
    if n <= 2:
        raise UnsupportedDimension(f"tail constant requires n >= 3, got n = {n}")
    if sigma2.is_zero:
        return 0.0
    sp = spectral_profile(sigma2)
    h = sp.h
    sign = (-1.0) ** n
    g = np.concatenate([sign * sp.g[2:0:-1], sp.g])
    mid = g[2:-2]
    d_h = (g[3:-1] - 2.0 * mid + g[1:-3]) / h**2
    d_2h = (g[4:] - 2.0 * mid + g[:-4]) / (4.0 * h * h)
    d2 = np.abs((4.0 * d_h - d_2h) / 3.0)
    # d2 covers r = 0 .. r_cut - 2h; the profile is negligible past that
    return float(sp.weight * integrate.trapezoid(d2, dx=h))


@dataclass(frozen=True)
class KernelTable:
    """q sampled on ``t_k = k dt`` with cumulative integral and constants."""

    n: int
    wave_speed: float
    dt: float
    t_grid: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    cumulative: np.ndarray = field(repr=False)
    kappa: float | None
    tail_K: float | None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def t_max(self) -> float:
        return float(self.t_grid[-1])

    def p_values(self, t):
        """p(t; c) = q(c t)/c, interpolated from the table."""
        return self.q_at(self.wave_speed * np.asarray(t, dtype=float)) / self.wave_speed

    def q_at(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s > self.t_max * (1.0 + 1e-12)):
            raise ExtendTable(f"kernel table ends at t = {self.t_max}, asked for {float(np.max(s))}")
        return self._spline(s)

    @property
    def _spline(self):
        sp = self.__dict__.get("_spl")
        if sp is None:
            sp = CubicSpline(self.t_grid, self.q)
            object.__setattr__(self, "_spl", sp)
        return sp

    def partial_integral(self, T: float) -> float:
        """int_0^T q, from the cumulative table (T on or between grid points)."""
        if T < 0:
            raise InvalidParameter("T must be nonnegative")
        if T > self.t_max * (1.0 + 1e-12):
            raise ExtendTable(f"kernel table ends at t = {self.t_max}")
        k = int(np.floor(T / self.dt + 1e-9))
        k = min(k, self.t_grid.size - 1)
        base = float(self.cumulative[k])
        rest = T - self.t_grid[k]
        if rest > 1e-14 * max(1.0, T):
            base += float(self._spline.integrate(self.t_grid[k], T))
        return base

    def to_csv(self, path, header_extra: dict | None = None) -> None:
        from .io import write_csv

        head = {"n": self.n, "wave_speed": self.wave_speed, **self.meta, **(header_extra or {})}
        write_csv(path, ["t", "q", "cumulative_q"], np.column_stack([self.t_grid, self.q, self.cumulative]), head)


def build_kernel_table(sigma2: FormFactor, t_max: float, dt: float, c: float = 1.0) -> KernelTable:
    """Tabulate q on [0, t_max] with step dt (q-time, i.e. c = 1 units)."""
    if not dt > 0.0 or not t_max >= 0.0:
        raise InvalidParameter("need dt > 0 and t_max >= 0")
    steps = int(np.ceil(t_max / dt - 1e-9))
    t = dt * np.arange(steps + 1)
    q = q_values(t, sigma2)
    q[0] = 0.0
    cum = integrate.cumulative_simpson(q, dx=dt, initial=0.0) if t.size > 2 else \
        integrate.cumulative_trapezoid(q, dx=dt, initial=0.0)
    n = sigma2.dim
    kap = kappa(sigma2) if n >= 3 else None
    K = tail_constant(sigma2) if n >= 3 else None
    sp = spectral_profile(sigma2)
    meta = {"cutoff": sp.cutoff, "spectral_nodes": sp.nodes, "radius": sigma2.support_radius,
            "mass": sigma2.mass}
    return KernelTable(n, float(c), float(dt), t, q, cum, kap, K, meta)


def partial_integral(T: float, sigma2: FormFactor, n: int | None = None, dt: float = 0.01) -> float:
    """int_0^T q(t) dt by composite quadrature on a kernel table grid."""
    _check_dim(sigma2, n)
    if T < 0:
        raise InvalidParameter("T must be nonnegative")
    if T == 0:
        return 0.0
    table = build_kernel_table(sigma2, T, dt)
    return table.partial_integral(T)


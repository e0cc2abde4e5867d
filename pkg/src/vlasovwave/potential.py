"""Assembly of the self-consistent potential ``Phi = Phi_0 - L(f)``.

Spatial variables live on a :class:`~vlasovwave.grids.Grid1D` (d = 1); the
transverse variable enters only through radial wavenumber quadrature.

Time-dependent pieces:

* ``Phi_0``: free wave evolution of the initial data seen through sigma_1, sigma_2.
* ``L(f)(t) = int_0^t p(t-s) (Sigma * rho)(s) ds``: the retarded back-reaction.
* its rescaled form ``int_0^{t/sqrt(eps)} q(s) (Sigma * rho)(t - sqrt(eps) s) ds``.
* ``-kappa Sigma * rho``: the eps -> 0 limit.

:class:`DirectWaveSolver` integrates the Fourier-transformed wave equation
node by node and serves as an independent route to the same potential.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._quad import filon, sphere_area
from .errors import ExtendTable, InvalidParameter, MissingHistory
from .formfactors import ConvolvedProfile, FormFactor, radial_fourier
from .grids import Grid1D, MacroDensity
from .memorykernel import KernelTable, spectral_profile

SOURCE_TAGS = ("phi0", "memory", "rescaled", "limit", "direct-wave", "combined")


@dataclass(frozen=True)
class PotentialField:
    grid: Grid1D
    values: np.ndarray = field(repr=False)
    gradient: np.ndarray = field(repr=False)
    source_tag: str
    time: float = 0.0

    def __post_init__(self):
        if self.source_tag not in SOURCE_TAGS:
            raise InvalidParameter(f"unknown source tag {self.source_tag!r}")

    def __sub__(self, other: "PotentialField") -> "PotentialField":
        return PotentialField(self.grid, self.values - other.values, self.gradient - other.gradient,
                              "combined", self.time)

    def __add__(self, other: "PotentialField") -> "PotentialField":
        return PotentialField(self.grid, self.values + other.values, self.gradient + other.gradient,
                              "combined", self.time)

    def scaled(self, factor: float, tag: str | None = None) -> "PotentialField":
        return PotentialField(self.grid, factor * self.values, factor * self.gradient,
                              tag or self.source_tag, self.time)


def zero_field(grid: Grid1D, tag: str = "combined", t: float = 0.0) -> PotentialField:
    z = np.zeros(grid.n)
    return PotentialField(grid, z, z.copy(), tag, t)


class GridConvolution:
    """Discrete ``(k * u)(x_i) = int k(x_i - y) u(y) dy`` and its x-derivative.

    ``u`` is represented by its periodic cubic-spline interpolant and the
    integral is taken on a sub-grid fine enough to resolve the kernel
    (at least ``nodes_per_support`` points across its support), so narrow
    kernels stay accurate on coarse grids.  Functions vanish near the box
    edges, so the periodic layout acts as zero padding.
    """

    def __init__(self, grid: Grid1D, kernel, kernel_grad, support: float | None = None,
                 nodes_per_support: int = 128):
        self.grid = grid
        m = 1
        if support is not None and support > 0:
            m = int(min(16, max(1, np.ceil(nodes_per_support * grid.dx / (2.0 * support)))))
        self.refine = m
        if m == 1:
            d = grid.x[:, None] - grid.x[None, :]
            self.matrix = kernel(d) * grid.dx
            self.grad_matrix = kernel_grad(d) * grid.dx
            return
        xf = grid.lo + grid.dx / m * np.arange(grid.n * m)
        interp = _periodic_spline_matrix(grid, xf)
        d = grid.x[:, None] - xf[None, :]
        h = grid.dx / m
        self.matrix = (kernel(d) * h) @ interp
        self.grad_matrix = (kernel_grad(d) * h) @ interp

    @classmethod
    def of_sigma(cls, grid: Grid1D, Sigma: ConvolvedProfile) -> "GridConvolution":
        if Sigma.dim != 1:
            raise InvalidParameter("gridded transport uses d = 1 profiles")
        return cls(grid, Sigma, Sigma.gradient_1d, Sigma.support_radius)

    @classmethod
    def of_formfactor(cls, grid: Grid1D, sigma1: FormFactor) -> "GridConvolution":
        if sigma1.dim != 1:
            raise InvalidParameter("gridded transport uses d = 1 profiles")
        return cls(grid, sigma1, sigma1.derivative, sigma1.support_radius)

    def apply(self, u):
        return self.matrix @ u

    def apply_grad(self, u):
        return self.grad_matrix @ u


def _periodic_spline_matrix(grid: Grid1D, xf):
    """Matrix mapping nodal values to the periodic cubic spline sampled at xf."""
    from scipy.interpolate import CubicSpline

    n = grid.n
    eye = np.eye(n)
    xs = np.append(grid.x, grid.hi)
    spl = CubicSpline(xs, np.vstack([eye, eye[:1]]), bc_type="periodic", axis=0)
    return spl(xf)


# ----------------------------------------------------------------------------
# homogeneous part


@dataclass(frozen=True)
class WaveInitialData:
    """Finite sums of separable terms ``a(x) b(|y|)`` for Psi_0 and Psi_1.

    Each term is a pair (a sampled on the x-grid, b a radial FormFactor in
    dimension n).
    """

    grid: Grid1D
    psi0: tuple = ()
    psi1: tuple = ()

    @property
    def n(self) -> int | None:
        for _, b in self.psi0 + self.psi1:
            return b.dim
        return None

    @property
    def is_zero(self) -> bool:
        return not any(np.any(a) and not b.is_zero for a, b in self.psi0 + self.psi1)

    def _gram(self, terms, inner):
        tot = 0.0
        for a_i, b_i in terms:
            for a_j, b_j in terms:
                tot += float(np.sum(a_i * a_j) * self.grid.dx) * inner(b_i, b_j)
        return tot

    def l2_norms(self):
        """(||Psi_0||, ||Psi_1||) in L^2 of (x, y)."""
        return (np.sqrt(max(self._gram(self.psi0, _profile_inner), 0.0)),
                np.sqrt(max(self._gram(self.psi1, _profile_inner), 0.0)))

    def grad_y_norm(self) -> float:
        return float(np.sqrt(max(self._gram(self.psi0, _profile_grad_inner), 0.0)))

    def energy_vib(self, eps: float = 1.0) -> float:
        """(eps/2) ||Psi_1||^2 + (1/2) ||grad_y Psi_0||^2, the vibrational part of the rescaled energy."""
        _, n1 = self.l2_norms()
        return 0.5 * eps * n1**2 + 0.5 * self.grad_y_norm() ** 2


def _profile_inner(b1: FormFactor, b2: FormFactor, nodes: int = 800) -> float:
    from ._quad import gauss_legendre

    R = min(b1.support_radius, b2.support_radius)
    r, w = gauss_legendre(0.0, R, nodes)
    return float(sphere_area(b1.dim) * np.sum(w * r ** (b1.dim - 1) * b1(r) * b2(r)))


def _profile_grad_inner(b1: FormFactor, b2: FormFactor, nodes: int = 800) -> float:
    from ._quad import gauss_legendre

    R = min(b1.support_radius, b2.support_radius)
    r, w = gauss_legendre(0.0, R, nodes)
    return float(sphere_area(b1.dim) * np.sum(w * r ** (b1.dim - 1) * b1.derivative(r) * b2.derivative(r)))


@lru_cache(maxsize=64)
def _pair_spectrum(b: FormFactor, sigma2: FormFactor):
    sp = spectral_profile(sigma2)
    prod = radial_fourier(sigma2, sp.r) * radial_fourier(b, sp.r)
    return sp, prod


class HomogeneousPotential:
    """Phi_0(t, x) = sum_i (sigma_1 * a_i)(x) w_i(t) for separable wave data."""

    def __init__(self, wave: WaveInitialData, sigma1: FormFactor, sigma2: FormFactor, c: float):
        if wave.n is not None and wave.n != sigma2.dim:
            raise InvalidParameter(f"wave data live in n = {wave.n}, sigma2 in n = {sigma2.dim}")
        if not c > 0:
            raise InvalidParameter("wave speed must be positive")
        self.grid = wave.grid
        self.c = float(c)
        conv = GridConvolution.of_formfactor(self.grid, sigma1)
        self.terms = []
        n = sigma2.dim
        for kind, terms in (("cos", wave.psi0), ("sin", wave.psi1)):
            for a, b in terms:
                sp, prod = _pair_spectrum(b, sigma2)
                if kind == "cos":
                    amp = sp.weight * sp.r ** (n - 1) * prod
                else:
                    amp = sp.weight * sp.r ** (n - 2) * prod / self.c
                self.terms.append((kind, conv.apply(a), conv.apply_grad(a), amp, sp.h))

    def weights(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return [filon(amp, 0.0, h, self.c * t, kind=kind) for kind, _, _, amp, h in self.terms]

    def field(self, t: float) -> PotentialField:
        vals = np.zeros(self.grid.n)
        grad = np.zeros(self.grid.n)
        for (kind, sa, dsa, _, _), w in zip(self.terms, self.weights(t)):
            vals += sa * w[0]
            grad += dsa * w[0]
        return PotentialField(self.grid, vals, grad, "phi0", float(t))


def initial_potential(t: float, wave: WaveInitialData, sigma1: FormFactor, sigma2: FormFactor,
                      c: float) -> PotentialField:
    """Phi_0 by the cosine / cardinal-sine formula with radial wavenumber quadrature."""
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    return HomogeneousPotential(wave, sigma1, sigma2, c).field(t)


# ----------------------------------------------------------------------------
# memory part


class MemoryHistory:
    """Append-only record of rho, Sigma*rho and its gradient at t_k = k dt."""

    def __init__(self, grid: Grid1D, dt: float, Sigma: ConvolvedProfile | GridConvolution,
                 capacity: int = 64):
        self.grid = grid
        self.dt = float(dt)
        self.conv = Sigma if isinstance(Sigma, GridConvolution) else GridConvolution.of_sigma(grid, Sigma)
        self._rho = np.zeros((capacity, grid.n))
        self._s = np.zeros((capacity, grid.n))
        self._ds = np.zeros((capacity, grid.n))
        self._count = 0

    @property
    def step(self) -> int:
        return self._count - 1

    def push(self, rho) -> None:
        rho = rho.values if isinstance(rho, MacroDensity) else np.asarray(rho, dtype=float)
        if self._count == self._rho.shape[0]:
            for name in ("_rho", "_s", "_ds"):
                arr = getattr(self, name)
                setattr(self, name, np.concatenate([arr, np.zeros_like(arr)]))
        k = self._count
        self._rho[k] = rho
        self._s[k] = self.conv.apply(rho)
        self._ds[k] = self.conv.apply_grad(rho)
        self._count += 1

    @property
    def rho(self):
        return self._rho[: self._count]

    @property
    def snapshots(self):
        return self._s[: self._count]

    @property
    def gradients(self):
        return self._ds[: self._count]

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise MissingHistory(f"t = {t} is not on the history grid (dt = {self.dt})")
        if k > self.step:
            raise MissingHistory(f"history covers steps 0..{self.step}, need {k}")
        return k


def _trapezoid_weights(k: int, h: float):
    w = np.full(k + 1, h)
    w[0] *= 0.5
    w[-1] *= 0.5
    if k == 0:
        w[:] = 0.0
    return w


def _kernel_on_steps(kernel: KernelTable, dt: float, k: int):
    """p(j dt) for j = 0..k."""
    c = kernel.wave_speed
    ratio = c * dt / kernel.dt
    j = np.arange(k + 1)
    if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
        idx = j * int(round(ratio))
        if idx[-1] >= kernel.q.size:
            raise ExtendTable(f"kernel table ends at t = {kernel.t_max}")
        return kernel.q[idx] / c
    return kernel.p_values(j * dt)


def memory_potential(history: MemoryHistory, kernel: KernelTable, t: float) -> PotentialField:
    """L(f)(t) by the composite trapezoid rule over the stored history.

    The returned field is L(f) itself; it enters the potential with a minus sign.
    """
    k = history.index_of(t)
    p = _kernel_on_steps(kernel, history.dt, k)[::-1]
    w = _trapezoid_weights(k, history.dt) * p
    vals = w @ history.snapshots[: k + 1]
    grad = w @ history.gradients[: k + 1]
    return PotentialField(history.grid, vals, grad, "memory", float(t))


def rescaled_memory_potential(history: MemoryHistory, kernel: KernelTable, t: float,
                              eps: float) -> PotentialField:
    """(1/eps) L_eps(f)(t) = int_0^{t/sqrt(eps)} q(s) (Sigma*rho)(t - sqrt(eps) s) ds.

    ``kernel`` is the unit-speed q table.  The s-grid is the table grid; the
    history is interpolated linearly in time, which is exact when
    ``sqrt(eps) * kernel.dt`` equals the history step.
    """
    if not 0 < eps <= 1:
        raise InvalidParameter("eps must lie in (0, 1]")
    if kernel.wave_speed != 1.0:
        raise InvalidParameter("rescaled memory term needs the unit-speed q table")
    kmax = history.index_of(t)
    se = np.sqrt(eps)
    s_max = t / se
    if s_max > kernel.t_max * (1.0 + 1e-12):
        raise ExtendTable(f"need q up to {s_max}, table ends at {kernel.t_max}")
    h = kernel.dt
    jm = int(np.floor(s_max / h + 1e-9))
    s = h * np.arange(jm + 1)
    w = _trapezoid_weights(jm, h) * kernel.q[: jm + 1]
    tail = s_max - s[-1]
    S, dS = history.snapshots[: kmax + 1], history.gradients[: kmax + 1]

    def at_times(tau):
        pos = np.clip(tau / history.dt, 0.0, kmax)
        i0 = np.minimum(np.floor(pos + 1e-9).astype(int), kmax)
        fr = np.clip(pos - i0, 0.0, 1.0)
        i1 = np.minimum(i0 + 1, kmax)
        return ((1 - fr)[:, None] * S[i0] + fr[:, None] * S[i1],
                (1 - fr)[:, None] * dS[i0] + fr[:, None] * dS[i1])

    A, dA = at_times(t - se * s)
    vals, grad = w @ A, w @ dA
    if tail > 1e-12 * max(1.0, s_max):
        qe = float(kernel.q_at(s_max))
        q_last = kernel.q[jm]
        # last partial interval [s_jm, s_max] by the trapezoid rule
        vals += 0.5 * tail * (q_last * A[-1] + qe * S[0])
        grad += 0.5 * tail * (q_last * dA[-1] + qe * dS[0])
    return PotentialField(history.grid, vals, grad, "rescaled", float(t))


def limit_potential(rho: MacroDensity, Sigma: ConvolvedProfile | GridConvolution,
                    kappa: float) -> PotentialField:
    """Phi_bar = -kappa Sigma * rho."""
    if not kappa > 0:
        raise InvalidParameter("kappa must be positive")
    conv = Sigma if isinstance(Sigma, GridConvolution) else GridConvolution.of_sigma(rho.grid, Sigma)
    return PotentialField(rho.grid, -kappa * conv.apply(rho.values), -kappa * conv.apply_grad(rho.values),
                          "limit")


# ----------------------------------------------------------------------------
# direct wave oracle


def _step_coefficients(omega, tau):
    """Propagator pieces for u'' + omega^2 u = a + b s on [0, tau]."""
    wt = omega * tau
    small = wt < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        cs, sn = np.cos(wt), np.sin(wt)
        s_over = np.where(small, tau * (1 - wt**2 / 6.0 + wt**4 / 120.0), sn / omega)
        one_minus = np.where(small, tau**2 * (0.5 - wt**2 / 24.0 + wt**4 / 720.0), (1 - cs) / omega**2)
        lin = np.where(small, tau**3 * (1.0 / 6.0 - wt**2 / 120.0 + wt**4 / 5040.0),
                       (tau - sn / omega) / omega**2)
    return cs, s_over, one_minus, lin, omega * sn


class DirectWaveSolver:
    """Evolves Psi_hat(t, x, r) for u'' + c^2 r^2 u = -g sigma2_hat(r) (sigma_1 * rho)(t, x).

    The forcing is taken piecewise linear in time between history nodes and
    each step is integrated exactly.  The potential is recovered by
    Plancherel in y and convolution with sigma_1 in x.
    """

    def __init__(self, grid: Grid1D, sigma1: FormFactor, sigma2: FormFactor, c: float,
                 g: float = 1.0, wave: WaveInitialData | None = None, n_r: int = 1025,
                 t_final: float | None = None):
        if wave is not None and wave.n is not None and wave.n != sigma2.dim:
            raise InvalidParameter("wave data and sigma2 dimensions differ")
        self.grid, self.c, self.g, self.n = grid, float(c), float(g), sigma2.dim
        sp = spectral_profile(sigma2)
        n_r += 1 - n_r % 2
        self.r = np.linspace(0.0, sp.cutoff, n_r)
        h = self.r[1] - self.r[0]
        simpson = np.full(n_r, 2.0)
        simpson[1::2] = 4.0
        simpson[0] = simpson[-1] = 1.0
        self.wts = sp.weight * self.r ** (self.n - 1) * simpson * h / 3.0
        self.s2hat = radial_fourier(sigma2, self.r)
        if t_final is not None:
            per_period = 2.0 * np.pi / (self.c * t_final * h) if t_final > 0 else np.inf
            if per_period < 20.0:
                warnings.warn(f"wavenumber grid has {per_period:.1f} nodes per period at t = {t_final}; "
                              "increase n_r", RuntimeWarning, stacklevel=2)
        self.conv = GridConvolution.of_formfactor(grid, sigma1)
        self.omega = self.c * self.r
        self.u = np.zeros((grid.n, n_r))
        self.ud = np.zeros((grid.n, n_r))
        if wave is not None:
            for a, b in wave.psi0:
                self.u += np.outer(a, radial_fourier(b, self.r))
            for a, b in wave.psi1:
                self.ud += np.outer(a, radial_fourier(b, self.r))
        self.time = 0.0
        self._coef = {}

    def source(self, rho):
        return self.conv.apply(np.asarray(rho, dtype=float))

    def advance(self, s_now, s_next, dt: float) -> None:
        """One exact step with forcing linear between sigma_1*rho values s_now, s_next."""
        key = round(dt, 15)
        if key not in self._coef:
            self._coef[key] = _step_coefficients(self.omega, dt)
        cs, s_over, one_minus, lin, wsn = self._coef[key]
        a = -self.g * np.outer(s_now, self.s2hat)
        b = -self.g * np.outer((np.asarray(s_next) - s_now) / dt, self.s2hat)
        u0, v0 = self.u, self.ud
        self.u = u0 * cs + v0 * s_over + a * one_minus + b * lin
        self.ud = -u0 * wsn + v0 * cs + a * s_over + b * one_minus
        self.time += dt

    def potential(self) -> PotentialField:
        inner = self.u @ (self.wts * self.s2hat)
        return PotentialField(self.grid, self.conv.apply(inner), self.conv.apply_grad(inner),
                              "direct-wave", self.time)

    def energies(self):
        """(wave kinetic, wave elastic) = (1/2g) int |Psi_t|^2, (c^2/2g) int |grad_y Psi|^2."""
        dx = self.grid.dx
        kin = 0.5 / self.g * dx * np.sum((self.ud**2) @ self.wts)
        ela = 0.5 / self.g * dx * np.sum((self.u**2) @ (self.wts * self.omega**2))
        return float(kin), float(ela)


def direct_wave_potential(rho_history, wave: WaveInitialData | None, sigma1: FormFactor,
                          sigma2: FormFactor, c: float, t: float, dt: float, g: float = 1.0,
                          n_r: int = 1025, grid: Grid1D | None = None) -> PotentialField:
    """Phi(t) from the wave field driven by a stored density history.

    ``rho_history`` is a (K+1, N) array (or list of MacroDensity) sampled at
    ``k dt``; the density is interpolated linearly between samples.
    """
    if isinstance(rho_history, MemoryHistory):
        grid = rho_history.grid
        rho = rho_history.rho
    else:
        seq = list(rho_history)
        if seq and isinstance(seq[0], MacroDensity):
            grid = seq[0].grid
            rho = np.array([m.values for m in seq])
        else:
            rho = np.asarray(seq, dtype=float)
    if grid is None:
        grid = wave.grid if wave is not None else None
    if grid is None:
        raise InvalidParameter("grid unknown: pass MacroDensity history or grid=")
    k = int(round(t / dt))
    if k > len(rho) - 1:
        raise MissingHistory(f"history has {len(rho)} samples, need {k + 1}")
    solver = DirectWaveSolver(grid, sigma1, sigma2, c, g, wave, n_r, t_final=t)
    s_prev = solver.source(rho[0])
    for j in range(k):
        s_next = solver.source(rho[j + 1])
        solver.advance(s_prev, s_next, dt)
        s_prev = s_next
    return solver.potential()

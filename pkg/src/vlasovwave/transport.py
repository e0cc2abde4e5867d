"""Kinetic transport: characteristics, confinement radii, the coupled time loop,
the Picard iteration and the N-particle mode.

Gridded transport is one-dimensional in x (two-dimensional phase space).
The marching solver freezes the force at ``t_k`` over ``[t_k, t_k + dt]``
and advances ``f`` with a Strang split (x half step, v full step, x half
step) of periodic cubic-spline shifts, which conserve the discrete mass
exactly.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import map_coordinates

from . import diagnostics as diag
from ._advect import shift_along_axis0, shift_along_axis1
from .errors import InvalidParameter, OutOfDomain, SolverAbort
from .formfactors import FormFactor, self_convolve
from .grids import Grid1D, MacroDensity, PhaseSpaceState
from .memorykernel import build_kernel_table
from .potential import (DirectWaveSolver, GridConvolution, HomogeneousPotential, MemoryHistory,
                        PotentialField, WaveInitialData, memory_potential, rescaled_memory_potential,
                        zero_field)

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------------
# external potential


@dataclass(frozen=True)
class ExternalPotential:
    """V(x) in d = 1 (also used radially for d = 3 particles).

    kinds: ``zero``, ``harmonic`` (omega: V = omega^2 x^2 / 2), ``quadratic``
    (a: V = a x^2), ``linear`` (F: V = F x), ``quartic`` (b: V = b x^4) and
    ``table`` (samples ``xs``, ``vs`` interpolated by a cubic spline).
    """

    kind: str = "zero"
    param: float = 0.0
    xs: tuple = ()
    vs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "harmonic", "quadratic", "linear", "quartic", "table"):
            raise InvalidParameter(f"unknown potential kind {self.kind!r}")
        if self.kind == "table" and len(self.xs) < 4:
            raise InvalidParameter("table potential needs at least 4 samples")

    @property
    def _spline(self):
        from scipy.interpolate import CubicSpline

        sp = self.__dict__.get("_spl")
        if sp is None:
            sp = CubicSpline(np.asarray(self.xs), np.asarray(self.vs))
            object.__setattr__(self, "_spl", sp)
        return sp

    def V(self, x):
        x = np.asarray(x, dtype=float)
        k, a = self.kind, self.param
        if k == "zero":
            return np.zeros_like(x)
        if k == "harmonic":
            return 0.5 * a * a * x * x
        if k == "quadratic":
            return a * x * x
        if k == "linear":
            return a * x
        if k == "quartic":
            return a * x**4
        return self._spline(x)

    def dV(self, x):
        x = np.asarray(x, dtype=float)
        k, a = self.kind, self.param
        if k == "zero":
            return np.zeros_like(x)
        if k == "harmonic":
            return a * a * x
        if k == "quadratic":
            return 2.0 * a * x
        if k == "linear":
            return np.full_like(x, a)
        if k == "quartic":
            return 4.0 * a * x**3
        return self._spline(x, 1)

    def hessian_bound(self, radius: float) -> float:
        """sup over |x| <= radius of |V''|."""
        k, a = self.kind, self.param
        if k == "zero" or k == "linear":
            return 0.0
        if k == "harmonic":
            return a * a
        if k == "quadratic":
            return 2.0 * abs(a)
        if k == "quartic":
            return 12.0 * abs(a) * radius**2
        xs = np.linspace(-radius, radius, 2001)
        return float(np.max(np.abs(self._spline(np.clip(xs, self.xs[0], self.xs[-1]), 2))))

    @property
    def lower_bound_constant(self) -> float:
        """Smallest C with V(x) >= -C (1 + |x|^2), the confinement hypothesis."""
        k, a = self.kind, self.param
        if k in ("zero", "harmonic"):
            return 0.0
        if k == "quadratic":
            return max(0.0, -a)
        if k == "linear":
            return 0.5 * abs(a)
        if k == "quartic":
            return 0.0 if a >= 0 else np.inf
        xs = np.linspace(self.xs[0], self.xs[-1], 4001)
        return float(max(0.0, np.max(-self.V(xs) / (1.0 + xs**2))))

    def is_nonnegative(self) -> bool:
        k, a = self.kind, self.param
        if k == "zero":
            return True
        if k in ("harmonic",):
            return True
        if k in ("quadratic", "quartic"):
            return a >= 0
        if k == "linear":
            return a == 0
        return bool(np.min(self.V(np.linspace(self.xs[0], self.xs[-1], 4001))) >= 0)


# ----------------------------------------------------------------------------
# characteristics


@dataclass(frozen=True)
class FlowPoint:
    X: np.ndarray
    Xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "Xi", np.asarray(self.Xi, dtype=float))
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Xi))):
            raise InvalidParameter("flow point has non-finite components")


class PotentialPath:
    """grad Phi(t, x) on a grid, piecewise linear in t and in x.

    ``gradients[k]`` is sampled at ``times[k]``.  A single time makes the
    field static.
    """

    def __init__(self, grid: Grid1D, times, gradients, values=None, norm: float | None = None):
        self.grid = grid
        self.times = np.atleast_1d(np.asarray(times, dtype=float))
        self.gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
        self.values = None if values is None else np.atleast_2d(np.asarray(values, dtype=float))
        self._norm = norm

    @classmethod
    def zero(cls, grid: Grid1D) -> "PotentialPath":
        return cls(grid, [0.0], np.zeros((1, grid.n)), np.zeros((1, grid.n)), 0.0)

    @classmethod
    def from_fields(cls, fields) -> "PotentialPath":
        fields = list(fields)
        return cls(fields[0].grid, [f.time for f in fields], [f.gradient for f in fields],
                   [f.values for f in fields])

    def c1_norm(self) -> float:
        """sup |Phi| + sup |d_t Phi| over the path (used for confinement radii)."""
        if self._norm is not None:
            return self._norm
        if self.values is None:
            return 0.0
        sup = float(np.max(np.abs(self.values)))
        if self.times.size > 1:
            dt = np.diff(self.times)[:, None]
            sup += float(np.max(np.abs(np.diff(self.values, axis=0)) / dt))
        return sup

    def field_at(self, t: float) -> np.ndarray:
        if self.times.size == 1:
            return self.gradients[0]
        pos = np.interp(t, self.times, np.arange(self.times.size))
        i0 = int(min(np.floor(pos), self.times.size - 2))
        fr = pos - i0
        return (1 - fr) * self.gradients[i0] + fr * self.gradients[i0 + 1]

    def grad(self, t: float, x):
        x = np.asarray(x, dtype=float)
        g = self.grid
        span_hi = g.lo + g.dx * (g.n - 1)
        if np.any(x < g.lo) or np.any(x > span_hi):
            outside = np.any(np.abs(self.gradients) > 0)
            if outside:
                raise OutOfDomain(f"trajectory left the potential box [{g.lo}, {span_hi}]")
            return np.zeros_like(x)
        return np.interp(x, g.x, self.field_at(t))


def _force(t, X, phi: PotentialPath | None, V: ExternalPotential):
    a = -V.dV(X)
    if phi is not None:
        a = a - phi.grad(t, X)
    return a


def trace_flow(start: FlowPoint, t0: float, t1: float, phi: PotentialPath | None,
               V: ExternalPotential, dt: float = 1e-3) -> FlowPoint:
    """RK4 for X' = Xi, Xi' = -V'(X) - dPhi/dx(t, X) from t0 to t1 (either direction)."""
    span = t1 - t0
    steps = max(1, int(np.ceil(abs(span) / dt - 1e-12)))
    h = span / steps
    X, P = start.X.copy(), start.Xi.copy()
    # Kahan compensation keeps round-off from growing with the step count
    cx, cp = np.zeros_like(X), np.zeros_like(P)
    t = t0
    try:
        for _ in range(steps):
            k1x, k1v = P, _force(t, X, phi, V)
            k2x, k2v = P + 0.5 * h * k1v, _force(t + 0.5 * h, X + 0.5 * h * k1x, phi, V)
            k3x, k3v = P + 0.5 * h * k2v, _force(t + 0.5 * h, X + 0.5 * h * k2x, phi, V)
            k4x, k4v = P + h * k3v, _force(t + h, X + h * k3x, phi, V)
            dx = h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x) - cx
            dp = h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v) - cp
            Xn, Pn = X + dx, P + dp
            cx, cp = (Xn - X) - dx, (Pn - P) - dp
            X, P = Xn, Pn
            t = t0 + (_ + 1) * h
    except OutOfDomain:
        norm = phi.c1_norm() if phi is not None else 0.0
        R = np.max(apriori_radius(norm, abs(span), start, V))
        raise OutOfDomain(f"trajectory left the tabulated potential box; a box of radius {R:.6g} "
                          "(a-priori bound) contains every characteristic", radius=R) from None
    return FlowPoint(X, P)


def apriori_radius(norm: float, t: float, start: FlowPoint, V: ExternalPotential):
    """Confinement radius R(N, t, x0, v0) from the energy / Gronwall argument.

    With C the confinement constant of V, lambda = 1 + 2C and
    A(s) = 2(|V(x0)| + N + |v0|^2/2) + 2 s N + 2 N + 2 C (an upper bound of
    the a(s) of the energy estimate),

        |X(t)|^2  <= |x0|^2 e^{lambda t} + int_0^t e^{lambda (t-s)} A(s) ds,
        |Xi(t)|^2 <= 2 C |X(t)|^2_bound + A(t).

    Nondecreasing in N and t.  Vectorised over the start point.
    """
    if norm < 0:
        raise InvalidParameter("potential norm must be nonnegative")
    t = abs(float(t))
    C = V.lower_bound_constant
    if not np.isfinite(C):
        return np.full(np.shape(start.X), np.inf)
    x0 = np.asarray(start.X, dtype=float)
    v0 = np.asarray(start.Xi, dtype=float)
    x2 = x0**2 if x0.ndim <= 1 else np.sum(x0**2, axis=-1)
    v2 = v0**2 if v0.ndim <= 1 else np.sum(v0**2, axis=-1)
    lam = 1.0 + 2.0 * C
    alpha = 2.0 * (np.abs(V.V(np.sqrt(x2))) if V.kind != "linear" else np.abs(V.V(x0)).reshape(np.shape(x2)))
    alpha = alpha + 2.0 * norm + v2 + 2.0 * norm + 2.0 * C
    beta = 2.0 * norm
    e = np.expm1(lam * t)
    integral = alpha * e / lam + beta * (e / lam**2 - t / lam)
    xb = x2 * np.exp(lam * t) + integral
    vb = 2.0 * C * xb + alpha + beta * t
    return np.sqrt(xb + vb)


# ----------------------------------------------------------------------------
# Liouville pushforward (direct backward tracing to t = 0)


def liouville_pushforward(f0: PhaseSpaceState, phi: PotentialPath | None, V: ExternalPotential,
                          t: float, dt: float = 1e-2) -> PhaseSpaceState:
    """f(t, x, v) = f0(trace of (x, v) from t back to 0), bicubic interpolation of f0."""
    if t == 0.0:
        return f0.with_values(f0.values.copy(), time=0.0)
    X, P = f0.mesh()
    foot = trace_flow(FlowPoint(X.ravel(), P.ravel()), t, 0.0, phi, V, dt=dt)
    gx, gv = f0.x_grid, f0.v_grid
    ix = (foot.X - gx.lo) / gx.dx
    iv = (foot.Xi - gv.lo) / gv.dx
    out = map_coordinates(f0.values, [ix, iv], order=3, mode="constant", cval=0.0, prefilter=True)
    outside = (ix < 0) | (ix > gx.n - 1) | (iv < 0) | (iv > gv.n - 1)
    if np.any(outside):
        inside_mass = f0.values[:1, :].sum() + f0.values[-1:, :].sum() + f0.values[:, :1].sum() + f0.values[:, -1:].sum()
        if inside_mass > 0:
            warnings.warn("support breach: characteristics left the grid", RuntimeWarning, stacklevel=2)
    out = out.reshape(f0.values.shape)
    return _clip(f0, out, t)


def _clip(template: PhaseSpaceState, values, t, clip=True):
    clipped = 0.0
    if clip:
        neg = values < 0
        if np.any(neg):
            clipped = float(-values[neg].sum() * template.cell)
            values = np.where(neg, 0.0, values)
    return template.with_values(values, time=t, clipped_mass=template.clipped_mass + clipped)


# ----------------------------------------------------------------------------
# split-step transport


def strang_step(state: PhaseSpaceState, total_grad, dt: float) -> PhaseSpaceState:
    """Advance f by dt under the frozen force -total_grad(x).

    The state is not clipped: the shifts conserve the discrete mass exactly
    and clipping would break that.  ``clipped_mass`` records the current
    undershoot, i.e. the mass clipping would remove.
    """
    gx, gv = state.x_grid, state.v_grid
    v = gv.x
    half = 0.5 * dt * v / gx.dx
    f = shift_along_axis0(state.values, half)
    f = shift_along_axis1(f, -np.asarray(total_grad) * dt / gv.dx)
    f = shift_along_axis0(f, half)
    return state.with_values(f, time=state.time + dt, clipped_mass=undershoot(state.with_values(f)))


def undershoot(state: PhaseSpaceState) -> float:
    neg = state.values < 0
    return float(-state.values[neg].sum() * state.cell) if np.any(neg) else 0.0


def clipped(state: PhaseSpaceState) -> PhaseSpaceState:
    """Nonnegative copy for output; ``clipped_mass`` is the removed mass."""
    return state.with_values(np.maximum(state.values, 0.0), clipped_mass=undershoot(state))


def max_cell_displacement(state: PhaseSpaceState, total_grad, dt: float) -> float:
    """Largest per-step shift in cells over the numerical support of f."""
    f = np.abs(state.values)
    live = f > 1e-12 * f.max(initial=0.0)
    if not np.any(live):
        return 0.0
    vx = np.max(np.abs(state.v_grid.x[live.any(axis=0)])) * dt / state.x_grid.dx
    vv = np.max(np.abs(np.asarray(total_grad)[live.any(axis=1)])) * dt / state.v_grid.dx
    return float(max(vx, vv))


# ----------------------------------------------------------------------------
# coupled problem and run records


@dataclass
class CoupledProblem:
    """Everything the marching solver needs, already constructed.

    ``coupling`` selects how the self-consistent potential is obtained:
    ``memory`` (Phi_0 - L(f) from the kernel table), ``direct-wave`` (from
    the evolving wave field), ``limit`` (-kappa Sigma * rho), ``prescribed``
    (a fixed potential path, used by the Picard map) or ``none``.
    With ``eps`` set the rescaled system is solved: c = 1/sqrt(eps) and
    the source carries the factor 1/eps.
    """

    f0: PhaseSpaceState
    sigma1: FormFactor
    sigma2: FormFactor
    V: ExternalPotential = field(default_factory=ExternalPotential)
    wave: WaveInitialData | None = None
    c: float = 1.0
    eps: float | None = None
    T: float = 1.0
    dt: float = 0.01
    coupling: str = "memory"
    track_wave: bool = True
    n_r: int = 1025
    stride: int = 10
    mass_tol: float = 1e-6
    clip: bool = True  # clip output snapshots only
    prescribed: PotentialPath | None = None
    kappa: float | None = None

    @property
    def speed(self) -> float:
        return 1.0 / np.sqrt(self.eps) if self.eps is not None else self.c

    @property
    def source_gain(self) -> float:
        return 1.0 / self.eps if self.eps is not None else 1.0

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class RunRecord:
    problem: CoupledProblem
    times: np.ndarray
    records: list
    final: PhaseSpaceState
    snapshots: list
    history: MemoryHistory
    potentials: PotentialPath
    states: list | None = None
    warnings: list = field(default_factory=list)

    def diagnostics_table(self):
        return diag.records_to_table(self.records)


def wave_nodes(pb: "CoupledProblem") -> int:
    """Wavenumber nodes: at least ``pb.n_r`` and 20 per period of cos(c r T)."""
    from .memorykernel import spectral_profile

    cut = spectral_profile(pb.sigma2).cutoff
    need = int(np.ceil(20.0 * pb.speed * pb.T * cut / (2.0 * np.pi))) + 1
    return max(pb.n_r, need + 1 - need % 2)


class _Assembler:
    """Builds Phi(t_k) for the configured coupling."""

    def __init__(self, pb: CoupledProblem):
        self.pb = pb
        grid = pb.f0.x_grid
        self.grid = grid
        coupled = not (pb.sigma1.is_zero or pb.sigma2.is_zero)
        self.coupled = coupled and pb.coupling not in ("none",)
        self.Sigma = self_convolve(pb.sigma1)
        self.history = MemoryHistory(grid, pb.dt, self.Sigma, capacity=pb.steps + 1)
        self.hom = None
        if pb.wave is not None and not pb.wave.is_zero and pb.coupling in ("memory", "prescribed-phi0"):
            self.hom = HomogeneousPotential(pb.wave, pb.sigma1, pb.sigma2, pb.speed)
        self.kernel = None
        if self.coupled and pb.coupling == "memory":
            if pb.eps is None:
                self.kernel = build_kernel_table(pb.sigma2, pb.speed * pb.T, pb.speed * pb.dt, c=pb.speed)
            else:
                se = np.sqrt(pb.eps)
                self.kernel = build_kernel_table(pb.sigma2, pb.T / se, pb.dt / se, c=1.0)
        self.wave_solver = None
        if pb.coupling == "direct-wave" or (pb.track_wave and self.coupled and pb.coupling == "memory"):
            self.wave_solver = DirectWaveSolver(grid, pb.sigma1, pb.sigma2, pb.speed, pb.source_gain,
                                                pb.wave, wave_nodes(pb), t_final=pb.T)
        self.limit_conv = None
        if pb.coupling == "limit":
            if pb.kappa is None:
                raise InvalidParameter("limit coupling needs kappa")
            self.limit_conv = self.history.conv
        self._src_prev = None

    def push(self, rho, dt=None):
        self.history.push(rho)
        if self.wave_solver is not None:
            src = self.wave_solver.source(rho)
            if self._src_prev is not None:
                self.wave_solver.advance(self._src_prev, src, dt)
            self._src_prev = src

    def field(self, k: int) -> PotentialField:
        pb = self.pb
        t = k * pb.dt
        if pb.coupling == "prescribed":
            g = pb.prescribed
            vals = g.values[k] if g.values is not None else np.zeros(self.grid.n)
            return PotentialField(self.grid, vals, g.gradients[k], "combined", t)
        if pb.coupling == "direct-wave":
            if not self.coupled and (pb.wave is None or pb.wave.is_zero):
                return zero_field(self.grid, "direct-wave", t)
            return self.wave_solver.potential()
        if pb.coupling == "limit":
            if not self.coupled:
                return zero_field(self.grid, "limit", t)
            s, ds = self.history.snapshots[k], self.history.gradients[k]
            return PotentialField(self.grid, -pb.kappa * s, -pb.kappa * ds, "limit", t)
        phi = zero_field(self.grid, "combined", t)
        if self.hom is not None:
            phi = phi + self.hom.field(t)
        if self.coupled and pb.coupling == "memory":
            if pb.eps is None:
                L = memory_potential(self.history, self.kernel, t)
            else:
                L = rescaled_memory_potential(self.history, self.kernel, t, pb.eps)
            phi = phi - L
        return PotentialField(self.grid, phi.values, phi.gradient, "combined", t)

    def wave_energies(self):
        if self.wave_solver is None:
            return None
        return self.wave_solver.energies()


def simulate(pb: CoupledProblem, keep_states: bool = False, observer: Callable | None = None) -> RunRecord:
    """March the coupled system on [0, T] with explicit (frozen-force) coupling."""
    if pb.dt <= 0 or pb.T <= 0:
        raise InvalidParameter("need dt > 0 and T > 0")
    K = pb.steps
    if abs(K * pb.dt - pb.T) > 1e-9 * pb.T:
        raise InvalidParameter("T must be a multiple of dt")
    asm = _Assembler(pb)
    state = pb.f0.with_values(pb.f0.values.copy(), time=0.0, clipped_mass=0.0)
    mass0 = state.mass
    asm.push(state.density().values)
    x = state.x_grid.x
    dVx = pb.V.dV(x)
    records, snaps, states = [], [clipped(state) if pb.clip else state], [state] if keep_states else None
    pot_vals = np.zeros((K + 1, x.size))
    pot_grads = np.zeros((K + 1, x.size))
    notes = []
    warned = False
    for k in range(K + 1):
        phi = asm.field(k)
        pot_vals[k], pot_grads[k] = phi.values, phi.gradient
        rec = diag.total_energy(state, phi, pb.V, asm.wave_energies())
        records.append(rec)
        if observer is not None:
            observer(k, state, phi)
        drift = abs(state.mass - mass0) / max(mass0, 1e-300)
        if drift > pb.mass_tol * max(1.0, k * pb.dt):
            raise SolverAbort(f"mass drift {drift:.3e} exceeds bound at t = {k * pb.dt:.6g}",
                              record={"t": k * pb.dt, "mass": state.mass, "mass0": mass0})
        if k == K:
            break
        total = dVx + phi.gradient
        if not warned and max_cell_displacement(state, total, pb.dt) > 2.0:
            msg = "characteristic displacement exceeds 2 cells per step; accuracy may degrade"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            warned = True
        state = strang_step(state, total, pb.dt)
        state = state.with_values(state.values, time=(k + 1) * pb.dt)
        asm.push(state.density().values, pb.dt)
        if keep_states:
            states.append(state)
        if pb.stride and (k + 1) % pb.stride == 0:
            snaps.append(clipped(state) if pb.clip else state)
    times = pb.dt * np.arange(K + 1)
    path = PotentialPath(state.x_grid, times, pot_grads, pot_vals)
    return RunRecord(pb, times, records, state, snaps, asm.history, path, states, notes)


def self_consistent_simulate(config) -> RunRecord:
    """Build the problem described by a SimulationConfig and march it."""
    from .config import build_problem

    return simulate(build_problem(config))


# ----------------------------------------------------------------------------
# Picard iteration


@dataclass
class PicardResult:
    run: RunRecord
    gaps: list
    iterations: int
    converged: bool
    diverged: bool = False


def _phi_path_from_density(pb: CoupledProblem, rho_hist, asm_cache={}) -> PotentialPath:
    """Phi_0 - L(rho) at every step for a given density history."""
    sub = CoupledProblem(**{**pb.__dict__, "coupling": "memory", "track_wave": False})
    asm = _Assembler(sub)
    fields = []
    for k in range(pb.steps + 1):
        asm.history.push(rho_hist[k])
    for k in range(pb.steps + 1):
        fields.append(asm.field(k))
    return PotentialPath.from_fields(fields)


def picard_solve(pb: CoupledProblem, tol: float = 1e-8, max_iter: int = 30, check_stride: int = 1) -> PicardResult:
    """Iterate f <- Lambda_{f0}(Phi_0 - L(f)) until sup_t W1(f^{l+1}(t), f^l(t)) < tol.

    The initial guess transports f0 in Phi_0 alone.  Each application of the
    map transports f0 through a prescribed potential path with the same
    split-step scheme as the marching solver, so the discrete fixed point
    coincides with the marching solution.
    """
    grid = pb.f0.x_grid
    K = pb.steps
    zero_rho = np.zeros((K + 1, grid.n))
    phi = _phi_path_from_density(pb, zero_rho)
    run = simulate(_prescribed(pb, phi), keep_states=True)
    gaps = []
    if pb.sigma1.is_zero or pb.sigma2.is_zero:
        nxt = simulate(_prescribed(pb, _phi_path_from_density(pb, run.history.rho)), keep_states=True)
        gaps.append(_sup_w1(run.states, nxt.states, check_stride))
        return PicardResult(nxt, gaps, 1, True)
    diverged = False
    for it in range(1, max_iter + 1):
        phi = _phi_path_from_density(pb, run.history.rho)
        nxt = simulate(_prescribed(pb, phi), keep_states=True)
        g = _sup_w1(run.states, nxt.states, check_stride)
        gaps.append(g)
        run = nxt
        log.info("picard iteration %d: gap %.3e", it, g)
        if g < tol:
            return PicardResult(run, gaps, it, True)
        if it > 3 and g >= gaps[-2]:
            diverged = True
            break
    return PicardResult(run, gaps, len(gaps), False, diverged)


def _prescribed(pb: CoupledProblem, phi: PotentialPath) -> CoupledProblem:
    return CoupledProblem(**{**pb.__dict__, "coupling": "prescribed", "prescribed": phi, "track_wave": False,
                             "stride": 0})


def _sup_w1(states_a, states_b, stride: int) -> float:
    idx = list(range(0, len(states_a), max(1, stride)))
    if idx[-1] != len(states_a) - 1:
        idx.append(len(states_a) - 1)
    return max(diag.wasserstein1(states_a[i], states_b[i]) if states_a[i].mass > 0 else 0.0 for i in idx)


# ----------------------------------------------------------------------------
# Definition-type integrability check


def definition_check(f0: PhaseSpaceState, V: ExternalPotential, norm: float, T: float,
                     n_t: int = 33) -> tuple[float, bool]:
    """K(f0) = int f0 exp(int_0^T ||V''||_{B(0, r(t,x,v))} dt).

    Returns (value, uniqueness_mode).  An infinite or overflowing value
    means only existence is claimed.
    """
    X, P = f0.mesh()
    mask = f0.values > 0
    start = FlowPoint(X[mask], P[mask])
    ts = np.linspace(0.0, T, n_t)
    with np.errstate(over="ignore", invalid="ignore"):
        hb = np.array([[V.hessian_bound(r) for r in np.atleast_1d(apriori_radius(norm, t, start, V))]
                       for t in ts])
        expo = np.trapezoid(hb, ts, axis=0)
        val = float(np.sum(f0.values[mask] * np.exp(expo)) * f0.cell)
    ok = bool(np.isfinite(val))
    return (val if ok else np.inf), ok


# ----------------------------------------------------------------------------
# N-particle mode


@dataclass
class ParticleRecord:
    times: np.ndarray
    X: np.ndarray
    Xi: np.ndarray
    weights: np.ndarray
    energies: np.ndarray | None = None


def _sigma_fields(dim: int, Sigma, sigma1: FormFactor):
    """Return radial Sigma and dSigma/dr for d = 1 or 3."""
    return Sigma, Sigma.radial_derivative


def nparticle_simulate(initial: FlowPoint, weights, pb: CoupledProblem, grid: Grid1D | None = None,
                       direct_limit: int = 200) -> ParticleRecord:
    """Mean-field N-particle system with the memory interaction.

    Positions have shape (N,) for d = 1 or (N, 3) for d = 3.  The force on
    particle i is -V'(X_i) - grad(Phi_0 - L)(t, X_i) where L uses the
    weighted empirical density.  For d = 1 and N > direct_limit the
    shifted-Sigma sums are evaluated on ``grid`` and interpolated;
    otherwise they are summed pairwise.  Velocity Verlet in time.
    """
    X = np.array(initial.X, dtype=float)
    P = np.array(initial.Xi, dtype=float)
    w = np.asarray(weights, dtype=float)
    N = w.size
    if N < 1:
        raise InvalidParameter("need at least one particle")
    dim = 1 if X.ndim == 1 else X.shape[1]
    if dim not in (1, 3):
        raise InvalidParameter("particle mode supports d = 1 and d = 3")
    if pb.sigma1.dim != dim:
        raise InvalidParameter("sigma1 dimension must match particle dimension")
    K, dt = pb.steps, pb.dt
    coupled = not (pb.sigma1.is_zero or pb.sigma2.is_zero)
    Sigma = self_convolve(pb.sigma1) if coupled else None
    kernel = None
    if coupled:
        if pb.eps is None:
            kernel = build_kernel_table(pb.sigma2, pb.speed * pb.T, pb.speed * pb.dt, c=pb.speed)
        else:
            se = np.sqrt(pb.eps)
            kernel = build_kernel_table(pb.sigma2, pb.T / se, pb.dt / se, c=1.0)
    use_grid = coupled and dim == 1 and N > direct_limit
    if use_grid and grid is None:
        raise InvalidParameter("grid-evaluated interaction needs a grid")
    hom = None
    if pb.wave is not None and not pb.wave.is_zero:
        if dim != 1:
            raise InvalidParameter("wave initial data are supported for d = 1 particles only")
        hom = HomogeneousPotential(pb.wave, pb.sigma1, pb.sigma2, pb.speed)
    # history of the interaction gradient sampled where needed
    hist_pos = [X.copy()]
    hist_grid = []
    p_steps = None
    if coupled:
        if pb.eps is None:
            p_steps = kernel.q / pb.speed
        else:
            p_steps = kernel.q  # rescaled: s-grid of step dt/sqrt(eps)

    def sigma_grad_at(points, sources):
        """sum_j w_j grad Sigma(points - sources_j)."""
        if dim == 1:
            d = points[:, None] - sources[None, :]
            return (Sigma.gradient_1d(d) * w[None, :]).sum(axis=1)
        d = points[:, None, :] - sources[None, :, :]
        r = np.linalg.norm(d, axis=-1)
        dr = Sigma.radial_derivative(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[..., None] > 0, d / np.where(r > 0, r, 1.0)[..., None], 0.0)
        return np.einsum("ijk,ij,j->ik", unit, dr, w)

    def grid_field(sources):
        d = grid.x[:, None] - sources[None, :]
        return (Sigma.gradient_1d(d) * w[None, :]).sum(axis=1)

    if use_grid:
        hist_grid.append(grid_field(X))

    def interaction(k, Xk):
        if not coupled or k == 0:
            return np.zeros_like(Xk)
        if pb.eps is None:
            coeff = dt * p_steps[k::-1][: k + 1].copy()
            coeff[0] *= 0.5
            coeff[-1] *= 0.5
            if use_grid:
                g = coeff @ np.asarray(hist_grid[: k + 1])
                return np.interp(Xk, grid.x, g)
            out = np.zeros_like(Xk)
            for j in range(k):  # j = k carries p(0) = 0
                if coeff[j] != 0.0:
                    out += coeff[j] * sigma_grad_at(Xk, hist_pos[j])
            return out
        # rescaled: int_0^{t/sqrt(eps)} q(s) grad Sigma*rho(t - sqrt(eps) s) ds on history nodes
        coeff = kernel.dt * kernel.q[: k + 1].copy()
        coeff[0] *= 0.5
        coeff[k] *= 0.5
        if use_grid:
            g = coeff @ np.asarray(hist_grid[k::-1])
            return np.interp(Xk, grid.x, g)
        out = np.zeros_like(Xk)
        for s in range(k + 1):
            if coeff[s] != 0.0:
                out += coeff[s] * sigma_grad_at(Xk, hist_pos[k - s])
        return out

    def force(k, Xk):
        if dim == 1:
            a = -pb.V.dV(Xk)
        else:
            r = np.linalg.norm(Xk, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r[:, None] > 0, Xk / np.where(r > 0, r, 1.0)[:, None], 0.0)
            a = -pb.V.dV(r)[:, None] * unit
        a = a + interaction(k, Xk)
        if hom is not None:
            a = a - np.interp(Xk, pb.wave.grid.x, hom.field(k * dt).gradient)
        return a

    Xs, Ps = [X.copy()], [P.copy()]
    F = force(0, X)
    for k in range(K):
        P = P + 0.5 * dt * F
        X = X + dt * P
        hist_pos.append(X.copy())
        if use_grid:
            hist_grid.append(grid_field(X))
        F = force(k + 1, X)
        P = P + 0.5 * dt * F
        Xs.append(X.copy())
        Ps.append(P.copy())
    return ParticleRecord(dt * np.arange(K + 1), np.array(Xs), np.array(Ps), w)

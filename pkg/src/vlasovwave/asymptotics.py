"""Small-eps behaviour of the rescaled system and the Coulomb-kernel limit.

The rescaled system has wave speed 1/sqrt(eps) and source gain 1/eps; as
eps -> 0 the memory term tends to -kappa Sigma * rho, so f_eps should
approach the solution of the Vlasov equation with that potential.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .errors import DivergentConstant, HypothesisViolation, InvalidParameter, OutOfRangeExponent
from .formfactors import FormFactor, inner_factor_norm, kernel_gap_norm, self_convolve
from .grids import MacroDensity, PhaseSpaceState
from .memorykernel import build_kernel_table, kappa, tail_constant
from .potential import (HomogeneousPotential, MemoryHistory, PotentialField, WaveInitialData,
                        limit_potential, rescaled_memory_potential)
from .transport import CoupledProblem, ExternalPotential, simulate


# ----------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class RateFit:
    """Least-squares line y = slope * x + intercept; ``residual`` is the RMS misfit."""

    abscissae: np.ndarray
    ordinates: np.ndarray
    slope: float
    intercept: float
    residual: float

    @classmethod
    def fit(cls, x, y) -> "RateFit":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.size < 2:
            raise InvalidParameter("a fit needs at least two points")
        slope, icpt = np.polyfit(x, y, 1)
        res = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
        return cls(x, y, float(slope), float(icpt), res)

    @classmethod
    def loglog(cls, eps, values) -> "RateFit":
        return cls.fit(np.log(eps), np.log(values))

    def to_text(self) -> str:
        return (f"slope = {self.slope:.17g}\nintercept = {self.intercept:.17g}\n"
                f"residual = {self.residual:.17g}\npoints = {self.abscissae.size}\n")


# ----------------------------------------------------------------------------
# eps sweep


@dataclass
class EpsilonSweepPlan:
    f0: PhaseSpaceState
    sigma1: FormFactor
    sigma2: FormFactor
    V: ExternalPotential = field(default_factory=lambda: ExternalPotential("harmonic", 1.0))
    wave: WaveInitialData | None = None
    eps_list: tuple = (1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0)
    T_star: float = 1.0
    dt: float = 0.01
    metric: str = "w1"

    def __post_init__(self):
        eps = np.asarray(self.eps_list, dtype=float)
        if eps.size < 1 or np.any(eps <= 0) or np.any(eps > 1):
            raise InvalidParameter("eps values must lie in (0, 1]")
        if np.any(np.diff(eps) >= 0):
            raise InvalidParameter("eps_list must be strictly decreasing")
        if self.metric not in ("w1", "l1"):
            raise InvalidParameter("metric must be 'w1' or 'l1'")
        if self.sigma2.dim <= 2:
            raise DivergentConstant(f"kappa is infinite for n = {self.sigma2.dim}; the limit needs n >= 3")
        if not self.V.is_nonnegative():
            raise HypothesisViolation("H7", "the external potential must be non negative")
        if not np.isfinite(self.f0.lp_norm(np.inf)):
            raise HypothesisViolation("H9", "f0 must be bounded")
        if self.wave is not None and not np.isfinite(self.wave.energy_vib(float(eps[0]))):
            raise HypothesisViolation("H8", "the rescaled initial energy must be finite")


@dataclass
class SweepEntry:
    eps: float
    distance: float
    rho_l1: float
    phi0_probe: float
    phi0_bound: float
    runtime: float
    record: diag.DiagnosticsRecord


def limit_problem(plan: EpsilonSweepPlan) -> CoupledProblem:
    """Vlasov equation with Phi_bar = -kappa Sigma * rho, no homogeneous wave part."""
    kap = kappa(plan.sigma2) if not plan.sigma2.is_zero else 1.0
    return CoupledProblem(plan.f0, plan.sigma1, plan.sigma2, plan.V, None, T=plan.T_star, dt=plan.dt,
                          coupling="limit", track_wave=False, stride=0, kappa=kap)


def rescaled_problem(plan: EpsilonSweepPlan, eps: float) -> CoupledProblem:
    return CoupledProblem(plan.f0, plan.sigma1, plan.sigma2, plan.V, plan.wave, eps=eps, T=plan.T_star,
                          dt=plan.dt, coupling="memory", track_wave=False, stride=0)


def phi0_gradient_bound(plan: EpsilonSweepPlan, t: float) -> float:
    """||grad sigma1||_2 ||sigma2||_2 (||Psi_0|| + t ||Psi_1||), uniform in eps."""
    if plan.wave is None or plan.wave.is_zero:
        return 0.0
    n0, n1 = plan.wave.l2_norms()
    return _grad_l2(plan.sigma1) * plan.sigma2.lp_norm(2) * (n0 + t * n1)


def _grad_l2(sigma: FormFactor, nodes: int = 800) -> float:
    from ._quad import gauss_legendre, sphere_area

    r, w = gauss_legendre(0.0, sigma.support_radius, nodes)
    return float(np.sqrt(sphere_area(sigma.dim) * np.sum(w * r ** (sigma.dim - 1) * sigma.derivative(r) ** 2)))


def phi0_probe(plan: EpsilonSweepPlan, eps: float, samples: int = 21) -> float:
    """sup over [0, T*] of ||grad Phi_0,eps||_inf on the grid."""
    if plan.wave is None or plan.wave.is_zero:
        return 0.0
    hom = HomogeneousPotential(plan.wave, plan.sigma1, plan.sigma2, 1.0 / np.sqrt(eps))
    return float(max(np.max(np.abs(hom.field(t).gradient)) for t in np.linspace(0.0, plan.T_star, samples)))


def _distance(plan, a: PhaseSpaceState, b: PhaseSpaceState) -> float:
    if plan.metric == "l1":
        return diag.l1_density_distance(a.density(), b.density())
    if a.mass <= 0 and b.mass <= 0:
        return 0.0
    return diag.wasserstein1(a, b)


def run_epsilon_sweep(plan: EpsilonSweepPlan, limit_run=None) -> list[SweepEntry]:
    """Distance between f_eps(T*) and the limit solution for each eps of the plan."""
    t0 = time.perf_counter()
    ref = limit_run if limit_run is not None else simulate(limit_problem(plan))
    t_ref = time.perf_counter() - t0
    out = []
    for eps in plan.eps_list:
        t0 = time.perf_counter()
        run = simulate(rescaled_problem(plan, float(eps)))
        dist = _distance(plan, run.final, ref.final)
        l1 = diag.l1_density_distance(run.final.density(), ref.final.density())
        probe = phi0_probe(plan, float(eps))
        out.append(SweepEntry(float(eps), dist, l1, probe, phi0_gradient_bound(plan, plan.T_star),
                              time.perf_counter() - t0 + t_ref / len(plan.eps_list), run.records[-1]))
    return out


@dataclass
class FrozenRhoRow:
    eps: float
    error: float
    bound: float


def frozen_rho_check(rho: MacroDensity, sigma1: FormFactor, sigma2: FormFactor, t: float, eps_list,
                     dt: float = 1e-3) -> list[FrozenRhoRow]:
    """||(1/eps) L_eps - kappa Sigma*rho||_inf for a time-independent rho.

    The gap equals |int_{t/sqrt(eps)}^inf q| ||Sigma*rho||_inf, bounded by
    K sqrt(eps) / t ||Sigma*rho||_inf with K the tail constant.
    """
    if t <= 0:
        raise InvalidParameter("t must be positive")
    Sigma = self_convolve(sigma1)
    kap = kappa(sigma2)
    K = tail_constant(sigma2)
    steps = int(round(t / dt))
    hist = MemoryHistory(rho.grid, t / steps, Sigma, capacity=steps + 1)
    for _ in range(steps + 1):
        hist.push(rho.values)
    lim = limit_potential(rho, hist.conv, kap)
    sup_s = float(np.max(np.abs(hist.snapshots[0])))
    rows = []
    for eps in eps_list:
        se = np.sqrt(eps)
        table = build_kernel_table(sigma2, t / se, hist.dt / se, c=1.0)
        L = rescaled_memory_potential(hist, table, steps * hist.dt, eps)
        err = float(np.max(np.abs(L.values + lim.values)))
        rows.append(FrozenRhoRow(float(eps), err, K * se / t * sup_s))
    return rows


# ----------------------------------------------------------------------------
# interpolation inequality


@dataclass(frozen=True)
class InterpolationResult:
    lhs: float
    rhs: float
    constant: float

    @property
    def satisfied(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300


def interpolation_constant(m: float, d: int = 1) -> float:
    """C(m, d) = 2 |B(0,1)|^{m/(m+d)}."""
    from ._quad import ball_volume

    return 2.0 * ball_volume(d) ** (m / (m + d))


def interpolation_check(f: PhaseSpaceState, m: float) -> InterpolationResult:
    """||rho||_{(d+m)/d} against C(m,d) ||f||_inf^{m/(d+m)} (int |v|^m f)^{d/(d+m)}, d = 1."""
    if m < 0:
        raise InvalidParameter("moment order must be nonnegative")
    d = 1
    rho = f.density()
    p = (d + m) / d
    lhs = float((np.sum(np.abs(rho.values) ** p) * rho.grid.dx) ** (1.0 / p))
    mom = float(np.sum(np.abs(f.values) @ np.abs(f.v_grid.x) ** m) * f.cell)
    C = interpolation_constant(m, d)
    rhs = C * f.lp_norm(np.inf) ** (m / (d + m)) * mom ** (d / (d + m))
    return InterpolationResult(lhs, rhs, C)


# ----------------------------------------------------------------------------
# Coulomb kernel study


@dataclass
class VPKernelStudy:
    eps: np.ndarray
    gaps: np.ndarray
    inner: np.ndarray
    gap_fit: RateFit
    inner_fit: RateFit
    q_exp: float

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.gaps) < 0))


def vp_kernel_rate_study(eps_list, q_exp: float = 2.0, p: float = 2.0, n_r: int = 601) -> VPKernelStudy:
    """Kernel-gap norms and the inner-factor norms of the mollified Coulomb family.

    ``gap_fit`` is the log-log slope of the gap norm against eps (the
    scaling identity gives 1 - 3/(2 q_exp)); ``inner_fit`` is the slope
    of the inner factor, expected d(p-1)/(2p) = 3/4 at p = 2.
    """
    if not q_exp > 1.5:
        raise OutOfRangeExponent(f"exponent must exceed 3/2, got {q_exp}")
    eps = np.asarray(eps_list, dtype=float)
    gaps = np.array([kernel_gap_norm(e, q_exp, n_r=n_r) for e in eps])
    inner = np.array([inner_factor_norm(e, p) for e in eps])
    return VPKernelStudy(eps, gaps, inner, RateFit.loglog(eps, gaps), RateFit.loglog(eps, inner), q_exp)


# ----------------------------------------------------------------------------
# rescaled energy


@dataclass(frozen=True)
class EnergyDecomposition:
    kinetic: float
    external: float
    coupling: float
    wave_kinetic: float
    wave_elastic: float
    partial: bool = False

    @property
    def total(self) -> float:
        w = 0.0 if self.partial else self.wave_kinetic + self.wave_elastic
        return self.kinetic + self.external + self.coupling + w


def rescaled_energy(state: PhaseSpaceState, phi: PotentialField | None, V: ExternalPotential,
                    wave_terms=None) -> EnergyDecomposition:
    """(kinetic, external, coupling, (eps/2)|Psi_t|^2, (1/2)|grad_y Psi|^2).

    ``wave_terms`` are the energies of a wave solver run with gain 1/eps
    and speed 1/sqrt(eps), which carry the eps weights already.  Without
    them the decomposition is flagged partial.
    """
    rec = diag.total_energy(state, phi, V, wave_terms)
    if wave_terms is None:
        return EnergyDecomposition(rec.kinetic, rec.external, rec.coupling, np.nan, np.nan, True)
    return EnergyDecomposition(rec.kinetic, rec.external, rec.coupling, rec.wave_kinetic, rec.wave_elastic)

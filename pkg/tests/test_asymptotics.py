import numpy as np
import pytest

from conftest import TWO_BUMPS
from vlasovwave.asymptotics import (EpsilonSweepPlan, RateFit, frozen_rho_check, interpolation_check,
                                    interpolation_constant, phi0_gradient_bound, phi0_probe, rescaled_energy,
                                    run_epsilon_sweep, vp_kernel_rate_study)
from vlasovwave.errors import DivergentConstant, HypothesisViolation, InvalidParameter, OutOfRangeExponent
from vlasovwave.formfactors import FormFactor, make_bump
from vlasovwave.grids import Grid1D, PhaseSpaceState, phase_bumps
from vlasovwave.potential import WaveInitialData, zero_field
from vlasovwave.transport import CoupledProblem, ExternalPotential, FlowPoint, simulate, trace_flow

HARM = ExternalPotential("harmonic", 1.0)


def test_rate_fit_exact_power():
    eps = np.array([1, 0.25, 1 / 16, 1 / 64])
    fit = RateFit.loglog(eps, 3.0 * eps**0.75)
    assert fit.slope == pytest.approx(0.75, abs=1e-12) and fit.residual < 1e-12
    assert "slope" in fit.to_text()


def test_plan_validation(f0_64, sigmas):
    s1, s2 = sigmas
    with pytest.raises(InvalidParameter):
        EpsilonSweepPlan(f0_64, s1, s2, eps_list=(0.25, 1.0))
    with pytest.raises(InvalidParameter):
        EpsilonSweepPlan(f0_64, s1, s2, metric="w2")
    with pytest.raises(DivergentConstant):
        EpsilonSweepPlan(f0_64, s1, make_bump(2, 1.0, 1.0))
    with pytest.raises(HypothesisViolation) as err:
        EpsilonSweepPlan(f0_64, s1, s2, V=ExternalPotential("quadratic", -1.0))
    assert "H7" in str(err.value)


def test_sweep_uncoupled_distances_vanish(f0_64, sigmas):
    plan = EpsilonSweepPlan(f0_64, FormFactor(1, 1.0, 0.0), sigmas[1], T_star=0.5, dt=0.05)
    for e in run_epsilon_sweep(plan):
        assert e.distance <= 1e-12 and e.rho_l1 <= 1e-12


def test_sweep_small_trend(f0_64, sigmas):
    plan = EpsilonSweepPlan(f0_64, *sigmas, T_star=1.0, dt=0.02)
    d = np.array([e.distance for e in run_epsilon_sweep(plan)])
    assert np.all(d > 0) and np.all(np.isfinite(d)) and np.all(np.diff(d) < 0)


def test_phi0_probe_bounded(grid64, f0_64, sigmas):
    x = grid64.x
    wave = WaveInitialData(grid64, psi0=((np.exp(-x**2 / 4), make_bump(3, 1.5, 0.7)),),
                           psi1=((np.exp(-(x - 1) ** 2), make_bump(3, 0.8, 0.5)),))
    plan = EpsilonSweepPlan(f0_64, *sigmas, wave=wave, T_star=1.0)
    bound = phi0_gradient_bound(plan, plan.T_star)
    for eps in plan.eps_list:
        assert 0.0 < phi0_probe(plan, eps) <= bound


def test_frozen_rho_tail_bound(f0_64, sigmas):
    rows = frozen_rho_check(f0_64.density(), *sigmas, 1.0, [1.0, 0.25, 1 / 16, 1 / 64], dt=1e-2)
    for r in rows:
        assert r.error <= r.bound


def test_interpolation_zero_state(grid64):
    res = interpolation_check(PhaseSpaceState(grid64, grid64, np.zeros((64, 64)), 0.0), 2.0)
    assert res.lhs == 0.0 and res.rhs == 0.0 and res.satisfied


def test_interpolation_plateau_quadrature():
    g = Grid1D(-4.0, 4.0, 800)
    X, V = np.meshgrid(g.x, g.x, indexing="ij")
    a = 1.5
    f = PhaseSpaceState(g, g, ((np.abs(X) <= a) & (np.abs(V) <= 1.0)).astype(float), 0.0)
    res = interpolation_check(f, 2.0)
    # closed forms: rho = 2 on |x| <= a; int v^2 f = 2a * 2/3
    lhs = 2.0 * (2 * a) ** (1 / 3)
    rhs = interpolation_constant(2.0, 1) * (4 * a / 3) ** (1 / 3)
    assert res.lhs == pytest.approx(lhs, rel=2e-2) and res.rhs == pytest.approx(rhs, rel=2e-2)
    assert res.satisfied and res.lhs < res.rhs


def test_interpolation_random_mixtures():
    g = Grid1D(-6.0, 6.0, 96)
    rng = np.random.default_rng(8)
    for _ in range(100):
        bumps = [(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.3, 2), rng.uniform(0.3, 2),
                  rng.uniform(0.05, 3)) for _ in range(rng.integers(1, 5))]
        assert interpolation_check(phase_bumps(g, g, bumps), rng.uniform(0.5, 4.0)).satisfied


def test_vp_kernel_study_small():
    st = vp_kernel_rate_study([1.0, 0.25], 2.0)
    assert st.strictly_decreasing and st.inner[1] < st.inner[0]
    with pytest.raises(OutOfRangeExponent):
        vp_kernel_rate_study([1.0], 1.4)


def test_rescaled_energy_zero_and_partial(grid64):
    z = PhaseSpaceState(grid64, grid64, np.zeros((64, 64)), 0.0)
    full = rescaled_energy(z, zero_field(grid64), HARM, (0.0, 0.0))
    assert full.total == 0.0 and not full.partial
    assert rescaled_energy(z, None, HARM).partial


def test_hamiltonian_energy_along_exact_flow():
    # nodes of f0 carried by the characteristic flow keep kinetic + external to round-off
    g = Grid1D(-8.0, 8.0, 64)
    f0 = phase_bumps(g, g, TWO_BUMPS)
    X, V = f0.mesh()
    w = f0.values.ravel() * f0.cell
    e0 = np.sum(w * (0.5 * V.ravel() ** 2 + HARM.V(X.ravel())))
    p = trace_flow(FlowPoint(X.ravel(), V.ravel()), 0.0, 1.0, None, HARM, dt=1e-3)
    e1 = np.sum(w * (0.5 * p.Xi**2 + HARM.V(p.X)))
    assert abs(e1 - e0) <= 1e-10 * e0


def test_direct_wave_rescaled_energy_order(sigmas):
    g = Grid1D(-8.0, 8.0, 128)
    f0 = phase_bumps(g, g, TWO_BUMPS)
    drift = []
    for dt in (0.01, 0.005):
        run = simulate(CoupledProblem(f0, *sigmas, HARM, eps=0.25, T=1.0, dt=dt, coupling="direct-wave",
                                      stride=0))
        phi = run.potentials
        E = []
        for k in (0, len(run.records) - 1):
            r = run.records[k]
            E.append(r.total)
        Es = np.array([r.total for r in run.records])
        drift.append(np.max(np.abs(Es - Es[0])) / abs(Es[0]))
    last = run.records[-1]
    dec = rescaled_energy(run.final, None, HARM, (last.wave_kinetic, last.wave_elastic))
    assert not dec.partial and dec.wave_elastic >= 0 and dec.kinetic >= 0
    assert drift[0] <= 1e-2 and drift[1] <= 1e-2
    assert np.log2(drift[0] / drift[1]) >= 0.9

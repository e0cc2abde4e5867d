"""The eleven acceptance criteria at their stated tolerances and runtime limits.

Each test prints one ``PASS/FAIL criterion N: ...`` line; the lines are
repeated in the terminal summary.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, TWO_BUMPS, lp_w1
from vlasovwave import diagnostics as diag
from vlasovwave.asymptotics import (EpsilonSweepPlan, RateFit, frozen_rho_check, interpolation_check,
                                    run_epsilon_sweep, vp_kernel_rate_study)
from vlasovwave.formfactors import FormFactor, kernel_gap_norm, make_bump, mollified_coulomb
from vlasovwave.grids import Grid1D, phase_bumps
from vlasovwave.memorykernel import (build_kernel_table, eval_kernel, kappa, partial_integral, q_values,
                                     tail_constant)
from vlasovwave.potential import WaveInitialData, direct_wave_potential
from vlasovwave.transport import (CoupledProblem, ExternalPotential, FlowPoint, liouville_pushforward,
                                  picard_solve, simulate, trace_flow)

HARM = ExternalPotential("harmonic", 1.0)
S1, S2 = make_bump(1, 1.0, 2.0), make_bump(3, 1.0, 2.0)  # configuration defaults
WIDE = [(-1.0, 0.5, 3.0, 3.0, 1.0)]


def report(n, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} ({elapsed:.1f} s of {limit:g} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def order(errors, ratio=2.0):
    e = np.asarray(errors)
    return np.log(e[:-1] / e[1:]) / np.log(ratio)


def bump_values(X, V, bumps):
    f = np.zeros_like(X)
    for x0, v0, rx, rv, h in bumps:
        s2 = ((X - x0) / rx) ** 2 + ((V - v0) / rv) ** 2
        inside = s2 < 1
        f[inside] += h * np.exp(1 - 1 / (1 - s2[inside]))
    return f


def test_criterion_1_kernel_limit():
    t0 = time.perf_counter()
    kap, K = kappa(S2), tail_constant(S2)
    tab = build_kernel_table(S2, 200.0, 0.01)
    rows = [(T, abs(tab.partial_integral(T) - kap), K / T + 1e-4 * kap) for T in (50.0, 100.0, 200.0)]
    ok = all(g <= b for _, g, b in rows)
    detail = "gaps " + ", ".join(f"T={T:g}: {g:.2e} <= {b:.2e}" for T, g, b in rows)
    report(1, ok, detail, time.perf_counter() - t0, 10)


def test_criterion_2_two_dimensional_log_growth():
    t0 = time.perf_counter()
    s = make_bump(2, 1.0, 2.0)
    Ts = np.array([10.0, 100.0, 1000.0])
    vals = np.array([partial_integral(T, s, dt=0.05) for T in Ts])
    fit = RateFit.fit(np.log(Ts), vals)
    relres = fit.residual / np.mean(np.abs(vals))
    ok = fit.slope > 0 and relres < 0.05
    report(2, ok, f"log slope {fit.slope:.4g}, relative residual {relres:.2e}", time.perf_counter() - t0, 30)


def test_criterion_3_speed_scaling():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    t, c = rng.uniform(0.0, 20.0, 1000), rng.uniform(0.2, 5.0, 1000)
    # p(t; c) through the direct spectral sum at speed c, q(ct)/c through the unit-speed route
    dev = float(np.max(np.abs(eval_kernel(t, c, S2) - q_values(c * t, S2) / c)))
    report(3, dev <= 1e-10, f"max deviation {dev:.2e}", time.perf_counter() - t0, 1)


def test_criterion_4_reduction_equivalence():
    t0 = time.perf_counter()
    g = Grid1D(-8.0, 8.0, 256)
    x = g.x
    f0 = phase_bumps(g, g, TWO_BUMPS)
    wave = WaveInitialData(g, psi0=((np.exp(-x**2 / 4), make_bump(3, 1.5, 0.7)),),
                           psi1=((np.exp(-(x - 1) ** 2), make_bump(3, 0.8, 0.5)),))
    gaps = []
    for dt, n_r in ((0.02, 513), (0.01, 1025), (0.005, 2049)):
        run = simulate(CoupledProblem(f0, S1, S2, HARM, wave, T=1.0, dt=dt, track_wave=False, stride=0, n_r=n_r))
        ref = run.potentials.values[-1]
        D = direct_wave_potential(run.history, wave, S1, S2, 1.0, 1.0, dt, n_r=n_r)
        gaps.append(float(np.max(np.abs(D.values - ref)) / np.max(np.abs(ref))))
    p = order(gaps)
    ok = max(gaps) <= 1e-3 and np.all(np.diff(gaps) < 0) and np.all(p >= 1.0)
    detail = "relative gaps " + ", ".join(f"{e:.2e}" for e in gaps) + ", orders " + ", ".join(f"{o:.2f}" for o in p)
    report(4, ok, detail, time.perf_counter() - t0, 300)


def test_criterion_5_conservation():
    t0 = time.perf_counter()
    g = Grid1D(-8.0, 8.0, 256)
    f0 = phase_bumps(g, g, TWO_BUMPS)
    mass, energy = [], []
    for dt in (0.01, 0.005):
        run = simulate(CoupledProblem(f0, S1, S2, HARM, T=2.0, dt=dt, stride=0))
        M = np.array([r.mass for r in run.records])
        E = np.array([r.total for r in run.records])
        mass.append(float(np.max(np.abs(M - M[0])) / M[0] / 2.0))
        energy.append(float(np.max(np.abs(E - E[0])) / abs(E[0])))
    ratio = energy[1] / energy[0]
    ok = max(mass) <= 1e-6 and energy[0] <= 1e-2 and 0.35 <= ratio <= 0.65
    detail = (f"mass drift per unit time {max(mass):.2e}, energy drift {energy[0]:.2e} -> {energy[1]:.2e} "
              f"(ratio {ratio:.2f})")
    report(5, ok, detail, time.perf_counter() - t0, 300)


def test_criterion_6_picard_contraction():
    t0 = time.perf_counter()
    g = Grid1D(-8.0, 8.0, 128)
    f0 = phase_bumps(g, g, TWO_BUMPS)
    pb = CoupledProblem(f0, S1, S2, HARM, T=2.0, dt=0.02, track_wave=False, stride=0)
    tol = 1e-8
    res = picard_solve(pb, tol=tol, check_stride=5)
    gaps = np.array(res.gaps)
    tail = gaps[1:]  # l >= 2
    ratios = tail[1:] / tail[:-1]
    march = simulate(pb)
    dist = diag.wasserstein1(march.final, res.run.final)
    ok = (res.converged and np.all(np.diff(tail) < 0) and np.all(ratios < 1) and np.all(np.diff(ratios) < 0)
          and dist <= 5 * tol)
    detail = (f"{res.iterations} iterations, ratios " + ", ".join(f"{r:.3f}" for r in ratios)
              + f", W1 to marching {dist:.1e}")
    report(6, ok, detail, time.perf_counter() - t0, 600)


def test_criterion_7_epsilon_sweep():
    t0 = time.perf_counter()
    g = Grid1D(-8.0, 8.0, 128)
    f0 = phase_bumps(g, g, TWO_BUMPS)
    d = np.array([e.distance for e in run_epsilon_sweep(EpsilonSweepPlan(f0, S1, S2))])
    rows = frozen_rho_check(f0.density(), S1, S2, 1.0, [1.0, 0.25, 1 / 16, 1 / 64])
    ok = np.all(np.diff(d) < 0) and d[-1] <= 0.5 * d[0] and all(r.error <= r.bound for r in rows)
    detail = ("W1 distances " + ", ".join(f"{x:.3g}" for x in d) + "; frozen-rho error/bound "
              + ", ".join(f"{r.error / r.bound:.2f}" for r in rows))
    report(7, ok, detail, time.perf_counter() - t0, 1200)


def test_criterion_8_vp_kernel():
    t0 = time.perf_counter()
    st = vp_kernel_rate_study([1.0, 0.25, 1 / 16, 1 / 64], 2.0)
    control = kernel_gap_norm(1.0, 2.0, cutoff=False)
    c3 = mollified_coulomb(1.0).c_d
    ok = (st.strictly_decreasing and abs(st.inner_fit.slope - 0.75) <= 0.15 and control <= 1e-6
          and abs(c3 - 1.0 / (2.0 * np.pi**2)) <= 1e-6)
    detail = (f"gaps decreasing {st.strictly_decreasing}, inner slope {st.inner_fit.slope:.3f}, "
              f"gap slope {st.gap_fit.slope:.3f}, control {control:.1e}, C3 error {abs(c3 - 0.5 / np.pi**2):.1e}")
    report(8, ok, detail, time.perf_counter() - t0, 120)


def test_criterion_9_interpolation():
    t0 = time.perf_counter()
    g = Grid1D(-6.0, 6.0, 96)
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(100):
        bumps = [(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.3, 2), rng.uniform(0.3, 2),
                  rng.uniform(0.05, 3)) for _ in range(rng.integers(1, 5))]
        bad += not interpolation_check(phase_bumps(g, g, bumps), rng.uniform(0.5, 4.0)).satisfied
    report(9, bad == 0, f"{bad} violations in 100 states", time.perf_counter() - t0, 10)


def test_criterion_10_exact_transport():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    x, v = rng.normal(size=1000) * 3, rng.normal(size=1000) * 3
    p = trace_flow(FlowPoint(x, v), 0.0, 2.3, None, ExternalPotential())
    char = float(max(np.max(np.abs(p.X - x - 2.3 * v)), np.max(np.abs(p.Xi - v))))
    g = Grid1D(-8.0, 8.0, 256)
    f0 = phase_bumps(g, g, WIDE)
    X, V = f0.mesh()
    grid_err = float(np.max(np.abs(liouville_pushforward(f0, None, ExternalPotential(), 0.77).values
                                   - bump_values(X - 0.77 * V, V, WIDE))))
    period = []
    for n in (64, 128, 256):
        g = Grid1D(-8.0, 8.0, n)
        f0 = phase_bumps(g, g, WIDE)
        T = 2 * np.pi
        run = simulate(CoupledProblem(f0, FormFactor(1, 1.0, 0.0), make_bump(3, 1.0, 1.0), HARM, T=T,
                                      dt=T / (n // 2), coupling="none", track_wave=False, stride=0))
        period.append(float(np.max(np.abs(run.final.values - f0.values))))
    p = order(period)
    ok = char <= 1e-12 and grid_err <= 1e-4 and period[-1] <= 1e-3 and 1.5 <= np.mean(p) <= 2.5
    detail = (f"characteristics {char:.1e}, grid {grid_err:.1e}, period return "
              + ", ".join(f"{e:.1e}" for e in period) + f" (mean order {np.mean(p):.2f})")
    report(10, ok, detail, time.perf_counter() - t0, 120)


def test_criterion_11_w1_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    line = sliced = 0.0
    for k in range(100):
        xa, xb = rng.normal(size=16), rng.normal(size=16) + 0.5
        a, b = rng.random(16), rng.random(16)
        a, b = a / a.sum(), b / b.sum()
        line = max(line, abs(diag.w1_1d(xa, a, xb, b) - lp_w1(xa, a, xb, b)))
        if k % 10 == 0:
            pa, pb = rng.normal(size=(16, 2)), rng.normal(size=(16, 2))
            oracle = np.mean([lp_w1(pa @ d, a, pb @ d, b) for d in diag.directions()])
            sliced = max(sliced, abs(diag.sliced_w1(pa, a, pb, b) - oracle))
    ok = line <= 1e-8 and sliced <= 1e-8
    report(11, ok, f"CDF vs LP {line:.1e} (100 pairs), sliced vs per-direction LP {sliced:.1e} (10 pairs)",
           time.perf_counter() - t0, 30)

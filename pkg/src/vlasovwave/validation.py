"""Fast invariant suite behind ``vwlab validate``.

Each check returns (passed, detail).  The suite is deliberately small
(seconds, not minutes); tests/test_acceptance.py holds the full criteria.
"""
from __future__ import annotations

import time

import numpy as np

from . import diagnostics as diag
from .formfactors import FormFactor, make_bump
from .grids import Grid1D, phase_bumps
from .memorykernel import build_kernel_table, eval_kernel, kappa, q_values, tail_constant
from .transport import CoupledProblem, ExternalPotential, FlowPoint, simulate, trace_flow


def _free_streaming():
    rng = np.random.default_rng(1)
    x, v = rng.normal(size=64), rng.normal(size=64)
    p = trace_flow(FlowPoint(x, v), 0.0, 1.7, None, ExternalPotential())
    err = float(np.max(np.abs(p.X - x - 1.7 * v)))
    return err <= 1e-12, f"max error {err:.3e}"


def _rotation():
    rng = np.random.default_rng(2)
    x, v = rng.normal(size=64), rng.normal(size=64)
    p = trace_flow(FlowPoint(x, v), 0.0, np.pi / 2, None, ExternalPotential("harmonic", 1.0))
    err = float(max(np.max(np.abs(p.X - v)), np.max(np.abs(p.Xi + x))))
    return err <= 1e-8, f"max error {err:.3e}"


def _round_trip():
    rng = np.random.default_rng(3)
    z = FlowPoint(rng.normal(size=64), rng.normal(size=64))
    V = ExternalPotential("quartic", 0.1)
    back = trace_flow(trace_flow(z, 0.0, 1.3, None, V), 1.3, 0.0, None, V)
    err = float(max(np.max(np.abs(back.X - z.X)), np.max(np.abs(back.Xi - z.Xi))))
    return err <= 1e-8, f"max displacement {err:.3e}"


def _speed_scaling():
    s2 = make_bump(3, 1.0, 1.0)
    rng = np.random.default_rng(4)
    t, c = rng.uniform(0, 20, 200), rng.uniform(0.2, 5, 200)
    direct = np.array([eval_kernel(ti, ci, s2) for ti, ci in zip(t, c)])
    err = float(np.max(np.abs(direct - q_values(c * t, s2) / c)))
    return err <= 1e-10, f"max deviation {err:.3e}"


def _kernel_limit():
    s2 = make_bump(3, 1.0, 1.0)
    tab = build_kernel_table(s2, 50.0, 0.01)
    kap, K = kappa(s2), tail_constant(s2)
    gap = abs(tab.partial_integral(50.0) - kap)
    return gap <= K / 50.0 + 1e-4 * kap, f"|int_0^50 q - kappa| = {gap:.3e}"


def _mass_conservation():
    g = Grid1D(-6.0, 6.0, 64)
    f0 = phase_bumps(g, g, [(-0.5, 0.3, 1.5, 1.5, 1.0)])
    pb = CoupledProblem(f0, make_bump(1, 1.0, 1.0), make_bump(3, 1.0, 1.0), ExternalPotential("harmonic", 1.0),
                        T=0.5, dt=0.05, track_wave=False, stride=0)
    run = simulate(pb)
    drift = abs(run.final.mass - f0.mass) / f0.mass
    return drift <= 1e-6 * 0.5, f"relative drift {drift:.3e}"


def _decoupled_energy():
    g = Grid1D(-6.0, 6.0, 64)
    f0 = phase_bumps(g, g, [(-0.5, 0.3, 1.5, 1.5, 1.0)])
    pb = CoupledProblem(f0, FormFactor(1, 1.0, 0.0), make_bump(3, 1.0, 1.0), ExternalPotential("harmonic", 1.0),
                        T=1.0, dt=0.05, coupling="none", track_wave=False, stride=0)
    run = simulate(pb)
    E = np.array([r.total for r in run.records])
    drift = float(np.max(np.abs(E - E[0])) / abs(E[0]))
    return drift <= 1e-3, f"relative energy drift {drift:.3e}"


def _w1_metric():
    rng = np.random.default_rng(5)
    x = np.arange(16.0)
    bad = 0
    for _ in range(20):
        a, b, c = (rng.random(16) for _ in range(3))
        a, b, c = a / a.sum(), b / b.sum(), c / c.sum()
        ab, ba = diag.w1_1d(x, a, x, b), diag.w1_1d(x, b, x, a)
        ac, cb = diag.w1_1d(x, a, x, c), diag.w1_1d(x, c, x, b)
        bad += abs(ab - ba) > 1e-12 or ab > ac + cb + 1e-12 or diag.w1_1d(x, a, x, a) != 0.0
    return bad == 0, f"{bad} metric violations"


def _interpolation():
    from .asymptotics import interpolation_check

    g = Grid1D(-6.0, 6.0, 96)
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(10):
        bumps = [(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2),
                  rng.uniform(0.1, 2)) for _ in range(3)]
        bad += not interpolation_check(phase_bumps(g, g, bumps), 2.0).satisfied
    return bad == 0, f"{bad} violations"


CHECKS = {
    "free streaming characteristics": _free_streaming,
    "harmonic rotation": _rotation,
    "flow reversibility": _round_trip,
    "speed scaling p = q(ct)/c": _speed_scaling,
    "kernel integral limit": _kernel_limit,
    "mass conservation": _mass_conservation,
    "decoupled energy": _decoupled_energy,
    "W1 metric axioms": _w1_metric,
    "interpolation inequality": _interpolation,
}


def run_suite():
    """List of (name, passed, detail, seconds)."""
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check counts as a failure
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail, time.perf_counter() - t0))
    return out

import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TWO_BUMPS
from vlasovwave import diagnostics as diag
from vlasovwave.errors import InvalidParameter, OutOfDomain, SolverAbort
from vlasovwave.formfactors import FormFactor, make_bump
from vlasovwave.grids import Grid1D, PhaseSpaceState, phase_bumps
from vlasovwave.transport import (CoupledProblem, ExternalPotential, FlowPoint, PotentialPath, apriori_radius,
                                  definition_check, liouville_pushforward, nparticle_simulate, picard_solve,
                                  simulate, trace_flow, undershoot)

HARM = ExternalPotential("harmonic", 1.0)
ZERO1 = FormFactor(1, 1.0, 0.0)


def bump_values(X, V, bumps):
    f = np.zeros_like(X)
    for x0, v0, rx, rv, h in bumps:
        s2 = ((X - x0) / rx) ** 2 + ((V - v0) / rv) ** 2
        inside = s2 < 1
        f[inside] += h * np.exp(1 - 1 / (1 - s2[inside]))
    return f


def _random_points(seed, n=64):
    rng = np.random.default_rng(seed)
    return FlowPoint(rng.normal(size=n), rng.normal(size=n))


# -- external potential ---------------------------------------------------------

def test_external_potential_derivatives():
    x = np.linspace(-3, 3, 41)
    for V in (HARM, ExternalPotential("quadratic", -0.5), ExternalPotential("linear", 0.7),
              ExternalPotential("quartic", 0.2)):
        fd = (V.V(x + 1e-6) - V.V(x - 1e-6)) / 2e-6
        assert np.max(np.abs(fd - V.dV(x))) < 1e-6
        C = V.lower_bound_constant
        assert np.all(V.V(x) >= -C * (1 + x**2) - 1e-12)
    assert HARM.is_nonnegative() and not ExternalPotential("quadratic", -1.0).is_nonnegative()
    with pytest.raises(InvalidParameter):
        ExternalPotential("cubic", 1.0)


def test_table_potential():
    xs = tuple(np.linspace(-4, 4, 33))
    V = ExternalPotential("table", 0.0, xs, tuple(0.5 * np.array(xs) ** 2))
    x = np.linspace(-3, 3, 13)
    assert np.max(np.abs(V.V(x) - 0.5 * x**2)) < 1e-10
    assert V.lower_bound_constant == 0.0 and V.is_nonnegative()


def test_flow_point_rejects_nan():
    with pytest.raises(InvalidParameter):
        FlowPoint(np.array([np.nan]), np.array([0.0]))


# -- characteristics ---------------------------------------------------------------

def test_free_streaming_exact():
    z = _random_points(0)
    p = trace_flow(z, 0.0, 2.3, None, ExternalPotential())
    assert np.max(np.abs(p.X - z.X - 2.3 * z.Xi)) <= 1e-12 and np.array_equal(p.Xi, z.Xi)


def test_harmonic_rotation():
    z = _random_points(1)
    p = trace_flow(z, 0.0, np.pi / 2, None, HARM, dt=1e-3)
    assert np.max(np.abs(p.X - z.Xi)) <= 1e-8 and np.max(np.abs(p.Xi + z.X)) <= 1e-8


def test_round_trip_with_potential():
    g = Grid1D(-20, 20, 401)
    t = np.linspace(0, 2, 21)
    grads = np.array([0.3 * np.sin(g.x) * np.cos(ti) for ti in t])
    phi = PotentialPath(g, t, grads)
    z = _random_points(2)
    back = trace_flow(trace_flow(z, 0.0, 2.0, phi, HARM), 2.0, 0.0, phi, HARM)
    assert np.max(np.abs(back.X - z.X)) <= 1e-8 and np.max(np.abs(back.Xi - z.Xi)) <= 1e-8


def test_out_of_domain_names_radius():
    g = Grid1D(-1, 1, 21)
    phi = PotentialPath(g, [0.0], np.ones((1, 21)))
    with pytest.raises(OutOfDomain) as err:
        trace_flow(FlowPoint(np.array([0.0]), np.array([5.0])), 0.0, 1.0, phi, HARM)
    assert "radius" in str(err.value)


def test_discrete_flow_is_volume_preserving():
    g = Grid1D(-20, 20, 801)
    t = np.linspace(0, 1.5, 16)
    grads = np.array([0.5 * np.sin(0.7 * g.x + ti) for ti in t])
    phi = PotentialPath(g, t, grads)
    z = _random_points(3, 30)
    h = 1e-5
    ex = FlowPoint(z.X + h, z.Xi)
    ev = FlowPoint(z.X, z.Xi + h)
    flow = lambda q: trace_flow(q, 0.0, 1.5, phi, HARM)
    a, bx, bv = flow(z), flow(ex), flow(ev)
    J = ((bx.X - a.X) * (bv.Xi - a.Xi) - (bv.X - a.X) * (bx.Xi - a.Xi)) / h**2
    assert np.max(np.abs(J - 1.0)) <= 1e-4


# -- a-priori radius ------------------------------------------------------------------

def test_radius_stationary_particle():
    z = FlowPoint(np.array([1.5, -2.0]), np.zeros(2))
    for t in (0.0, 1.0, 10.0):
        assert np.all(apriori_radius(0.0, t, z, ExternalPotential()) >= np.abs(z.X))


@settings(deadline=None, max_examples=100)
@given(st.floats(0, 5), st.floats(0, 3), st.floats(0, 3), st.floats(-4, 4), st.floats(-4, 4),
       st.floats(0, 3))
def test_radius_monotone(n1, dn, t, x, v, dt):
    z = FlowPoint(np.array([x]), np.array([v]))
    V = ExternalPotential("quadratic", -0.3)
    r = apriori_radius(n1, t, z, V)
    assert apriori_radius(n1 + dn, t, z, V) >= r and apriori_radius(n1, t + dt, z, V) >= r


def test_radius_contains_trajectories():
    rng = np.random.default_rng(7)
    z = FlowPoint(rng.uniform(-3, 3, 1000), rng.uniform(-3, 3, 1000))
    p = z
    for t in np.linspace(0.25, 5.0, 20):
        p = trace_flow(p, t - 0.25, t, None, HARM, dt=1e-2)
        assert np.all(np.hypot(p.X, p.Xi) <= apriori_radius(0.0, t, z, HARM))


# -- Liouville pushforward ---------------------------------------------------------------

def test_pushforward_identity_at_zero(f0_64):
    out = liouville_pushforward(f0_64, None, HARM, 0.0)
    assert np.array_equal(out.values, f0_64.values) and out.values is not f0_64.values


WIDE = [(-1.0, 0.5, 3.0, 3.0, 1.0)]


@pytest.mark.parametrize("t", [1.0, 0.77])
def test_pushforward_free_streaming(t):
    # t = 1 puts every foot on a node (dx = dv); t = 0.77 exercises the interpolation
    g = Grid1D(-8, 8, 256)
    f0 = phase_bumps(g, g, WIDE)
    out = liouville_pushforward(f0, None, ExternalPotential(), t)
    X, V = f0.mesh()
    assert np.max(np.abs(out.values - bump_values(X - t * V, V, WIDE))) <= 1e-4


def test_pushforward_harmonic_period():
    g = Grid1D(-8, 8, 128)
    f0 = phase_bumps(g, g, TWO_BUMPS)
    out = liouville_pushforward(f0, None, HARM, 2 * np.pi)
    assert np.max(np.abs(out.values - f0.values)) <= 1e-3


# -- marching solver ----------------------------------------------------------------------

def test_decoupled_marching_matches_rotation():
    g = Grid1D(-8, 8, 256)
    f0 = phase_bumps(g, g, WIDE)
    run = simulate(CoupledProblem(f0, ZERO1, make_bump(3, 1.0, 1.0), HARM, T=1.0, dt=0.01, coupling="none",
                                  track_wave=False, stride=0))
    X, V = f0.mesh()
    c, s = np.cos(1.0), np.sin(1.0)
    exact = bump_values(X * c - V * s, X * s + V * c, WIDE)
    assert np.max(np.abs(run.final.values - exact)) <= 1e-3


def test_coupled_mass_and_bounds(f0_64, sigmas):
    s1, s2 = sigmas
    run = simulate(CoupledProblem(f0_64, s1, s2, HARM, T=1.0, dt=0.02, track_wave=False, stride=10))
    m = np.array([r.mass for r in run.records])
    assert np.max(np.abs(m - m[0])) <= 1e-6 * m[0]
    assert len(run.snapshots) == 1 + 50 // 10
    assert all(np.all(s.values >= 0) for s in run.snapshots)
    assert run.final.clipped_mass == pytest.approx(undershoot(run.final))
    R = np.max(apriori_radius(run.potentials.c1_norm(), 1.0, FlowPoint(*[a.ravel() for a in f0_64.mesh()]), HARM))
    X, V = run.final.mesh()
    supp = run.final.values > 1e-8 * run.final.values.max()
    assert np.all(np.hypot(X[supp], V[supp]) <= R)


def test_linf_bound_decoupled():
    g = Grid1D(-8, 8, 128)
    f0 = phase_bumps(g, g, TWO_BUMPS)
    run = simulate(CoupledProblem(f0, ZERO1, make_bump(3, 1.0, 1.0), HARM, T=1.0, dt=0.02, coupling="none",
                                  track_wave=False, stride=0))
    assert max(r.linf for r in run.records) <= f0.values.max() * (1 + 1e-3)


def test_mass_abort(f0_64, sigmas):
    s1, s2 = sigmas
    with pytest.raises(SolverAbort) as err:
        simulate(CoupledProblem(f0_64, s1, s2, HARM, T=0.2, dt=0.02, mass_tol=1e-30, track_wave=False))
    assert "mass drift" in str(err.value) and "mass0" in err.value.record


def test_displacement_warning(f0_64):
    pb = CoupledProblem(f0_64, ZERO1, make_bump(3, 1.0, 1.0), HARM, T=1.0, dt=0.5, coupling="none",
                        track_wave=False, stride=0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        run = simulate(pb)
    assert any("2 cells" in str(x.message) for x in w) and run.warnings


def test_bad_time_grid(f0_64, sigmas):
    with pytest.raises(InvalidParameter):
        simulate(CoupledProblem(f0_64, *sigmas, HARM, T=1.0, dt=0.3))


# -- Picard -------------------------------------------------------------------------------

def test_picard_uncoupled_one_iteration(f0_64):
    res = picard_solve(CoupledProblem(f0_64, ZERO1, make_bump(3, 1.0, 1.0), HARM, T=0.5, dt=0.05,
                                      track_wave=False))
    assert res.iterations == 1 and res.converged


def test_picard_small_converges(f0_64, sigmas):
    pb = CoupledProblem(f0_64, *sigmas, HARM, T=1.0, dt=0.05, track_wave=False, stride=0)
    res = picard_solve(pb, tol=1e-9, check_stride=4)
    assert res.converged and not res.diverged
    g = np.array(res.gaps)
    assert np.all(np.diff(g[1:]) < 0)
    march = simulate(pb)
    assert diag.wasserstein1(march.final, res.run.final) <= 5e-9


def test_definition_check(f0_64):
    val, unique = definition_check(f0_64, HARM, 1.0, 2.0)
    assert unique and np.isfinite(val) and val >= f0_64.mass * np.exp(2.0) * (1 - 1e-12)
    val, unique = definition_check(f0_64, ExternalPotential("quadratic", -400.0), 1e6, 50.0)
    assert not unique and val == np.inf


# -- N-particle ---------------------------------------------------------------------------

def test_particle_straight_line(f0_64):
    pb = CoupledProblem(f0_64, ZERO1, make_bump(3, 1.0, 1.0), ExternalPotential(), T=1.0, dt=0.01)
    r = nparticle_simulate(FlowPoint(np.array([0.3]), np.array([0.7])), [1.0], pb)
    assert abs(r.X[-1][0] - 1.0) <= 1e-12


def test_particle_symmetric_self_force(f0_64, sigmas):
    pb = CoupledProblem(f0_64, *sigmas, ExternalPotential(), T=1.0, dt=0.01)
    r = nparticle_simulate(FlowPoint(np.array([0.3]), np.array([0.0])), [1.0], pb)
    assert np.max(np.abs(r.X - 0.3)) <= 1e-14


def test_particle_three_dimensions(f0_64, sigmas):
    pb = CoupledProblem(f0_64, make_bump(3, 1.0, 1.0), sigmas[1], ExternalPotential(), T=0.5, dt=0.01)
    X = np.array([[0.3, 0.1, 0.0], [-0.5, 0.2, 0.1]])
    r = nparticle_simulate(FlowPoint(X, np.zeros((2, 3))), [0.5, 0.5], pb)
    d0, d1 = np.linalg.norm(X[0] - X[1]), np.linalg.norm(r.X[-1][0] - r.X[-1][1])
    assert d1 < d0  # the interaction is attractive
    assert np.allclose(r.X[-1].sum(axis=0), X.sum(axis=0), atol=1e-12)  # momentum balance

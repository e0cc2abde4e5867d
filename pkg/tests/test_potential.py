import numpy as np
import pytest

from vlasovwave.errors import ExtendTable, InvalidParameter, MissingHistory
from vlasovwave.formfactors import make_bump, self_convolve
from vlasovwave.grids import Grid1D, MacroDensity
from vlasovwave.memorykernel import build_kernel_table, eval_kernel, kappa
from vlasovwave.potential import (GridConvolution, MemoryHistory, WaveInitialData, direct_wave_potential,
                                  initial_potential, limit_potential, memory_potential,
                                  rescaled_memory_potential)

G = Grid1D(-8.0, 8.0, 128)
S1, S2 = make_bump(1, 1.0, 2.0), make_bump(3, 1.0, 2.0)
SIG = self_convolve(S1)


def _wave(g=G, a0=1.0, a1=1.0):
    x = g.x
    return WaveInitialData(g, psi0=((a0 * np.exp(-x**2 / 4), make_bump(3, 1.5, 0.7)),),
                           psi1=((a1 * np.exp(-(x - 1) ** 2), make_bump(3, 0.8, 0.5)),))


def _history(rho_of_t, dt, K, grid=G):
    H = MemoryHistory(grid, dt, SIG)
    for k in range(K + 1):
        H.push(rho_of_t(k * dt))
    return H


def test_homogeneous_zero_data():
    w = WaveInitialData(G)
    for t in (0.0, 0.7, 3.0):
        assert np.all(initial_potential(t, w, S1, S2, 1.0).values == 0.0)


def test_initial_potential_physical_space_oracle():
    x = G.x
    a = np.exp(-x**2 / 4)
    b = make_bump(3, 1.5, 0.7)
    w = WaveInitialData(G, psi0=((a, b),))
    r = np.linspace(0.0, 1.0, 200_001)
    overlap = np.trapezoid(4 * np.pi * r**2 * b(r) * S2(r), r)
    y = np.linspace(-1.0, 1.0, 20_001)
    hy = y[1] - y[0]
    direct = np.array([np.sum(S1(y) * np.exp(-(xi - y) ** 2 / 4)) * hy for xi in x]) * overlap
    phi = initial_potential(0.0, w, S1, S2, 1.0)
    assert np.max(np.abs(phi.values - direct)) <= 1e-6


def test_initial_potential_bound_random():
    rng = np.random.default_rng(3)
    x = G.x
    for _ in range(20):
        w = WaveInitialData(G, psi0=((rng.uniform(0, 2) * np.exp(-((x - rng.uniform(-2, 2)) / rng.uniform(0.5, 2)) ** 2),
                                      make_bump(3, rng.uniform(0.5, 2), rng.uniform(0.1, 2))),),
                            psi1=((rng.uniform(0, 2) * np.exp(-((x - rng.uniform(-2, 2)) / rng.uniform(0.5, 2)) ** 2),
                                   make_bump(3, rng.uniform(0.5, 2), rng.uniform(0.1, 2))),))
        n0, n1 = w.l2_norms()
        t = rng.uniform(0, 3)
        phi = initial_potential(t, w, S1, S2, 1.0)
        assert np.max(np.abs(phi.values)) <= S1.lp_norm(2) * S2.lp_norm(2) * (n0 + t * n1)


def test_dimension_mismatch():
    w = WaveInitialData(G, psi0=((np.ones(G.n), make_bump(2, 1.0, 1.0)),))
    with pytest.raises(InvalidParameter):
        initial_potential(0.5, w, S1, S2, 1.0)


def test_memory_zero_history():
    H = _history(lambda t: np.zeros(G.n), 0.05, 20)
    assert np.all(memory_potential(H, build_kernel_table(S2, 1.0, 0.05), 1.0).values == 0.0)


def test_memory_separable_oracle():
    dt, K = 0.01, 100
    rho = np.exp(-G.x**2)
    H = _history(lambda t: rho, dt, K)
    L = memory_potential(H, build_kernel_table(S2, 1.0, dt), 1.0)
    s = dt * np.arange(K + 1)
    weight = np.trapezoid(eval_kernel(s, 1.0, S2), s)
    ref = weight * GridConvolution.of_sigma(G, SIG).apply(rho)
    assert np.max(np.abs(L.values - ref)) <= 1e-8 * np.max(np.abs(ref))


def test_memory_bound_random_histories():
    rng = np.random.default_rng(5)
    w12 = S1.sobolev_norm(1) ** 2 * S2.lp_norm(2) ** 2
    for _ in range(10):
        c0, a, om = rng.uniform(-2, 2), rng.uniform(0.3, 1.5), rng.uniform(0, 3)
        rho_of_t = lambda t: np.exp(-((G.x - c0 - 0.5 * np.sin(om * t)) / a) ** 2)
        H = _history(rho_of_t, 0.05, 40)
        L = memory_potential(H, build_kernel_table(S2, 2.0, 0.05), 2.0)
        mass = np.sum(rho_of_t(0.0)) * G.dx
        assert np.max(np.abs(L.values)) <= w12 * 2.0**2 / 2 * mass
        assert np.max(np.abs(L.gradient)) <= w12 * 2.0**2 / 2 * mass


def test_missing_history_and_short_table():
    H = _history(lambda t: np.zeros(G.n), 0.1, 5)
    with pytest.raises(MissingHistory):
        memory_potential(H, build_kernel_table(S2, 2.0, 0.1), 1.0)
    with pytest.raises(ExtendTable):
        memory_potential(H, build_kernel_table(S2, 0.2, 0.1), 0.5)
    with pytest.raises(ExtendTable):
        rescaled_memory_potential(H, build_kernel_table(S2, 1.0, 0.1), 0.5, 0.01)


def test_rescaled_eps_one_matches_memory():
    dt = 0.02
    H = _history(lambda t: np.exp(-(G.x - np.sin(t)) ** 2), dt, 50)
    tab = build_kernel_table(S2, 1.0, dt)
    a = rescaled_memory_potential(H, tab, 1.0, 1.0)
    b = memory_potential(H, tab, 1.0)
    assert np.max(np.abs(a.values - b.values)) <= 1e-10 * np.max(np.abs(b.values))


def test_rescaled_constant_density_and_limit():
    rho = np.exp(-G.x**2)
    dt = 0.01
    H = _history(lambda t: rho, dt, 100)
    tab = build_kernel_table(S2, 40.0, 0.005)
    conv = GridConvolution.of_sigma(G, SIG).apply(rho)
    k = kappa(S2)
    # the s-rule is the composite trapezoid; bound its error against the Simpson-accurate partial integral
    q2 = np.max(np.abs(np.diff(tab.q, 2))) / tab.dt**2
    errs = []
    for eps in (0.25, 1 / 16, 1 / 64, 1 / 1024):
        phi = rescaled_memory_potential(H, tab, 1.0, eps)
        ref = tab.partial_integral(1.0 / np.sqrt(eps)) * conv
        trap = 2.0 * tab.dt**2 / 12.0 * q2 * np.max(conv)  # q is supported in [0, 2]
        assert np.max(np.abs(phi.values - ref)) <= trap + 1e-10 * np.max(np.abs(ref))
        errs.append(np.max(np.abs(phi.values - k * conv)))
    assert errs[-1] <= 1e-4 * k * np.max(conv) and errs[-1] <= errs[0]


def test_limit_potential():
    dens = MacroDensity(G, np.zeros(G.n))
    assert np.all(limit_potential(dens, SIG, 1.0).values == 0.0)
    narrow = MacroDensity(G, np.exp(-((G.x - 0.5) / 0.2) ** 2))
    phi = limit_potential(narrow, SIG, 0.3)
    i = np.argmin(phi.values)
    assert abs(G.x[i] - 0.5) <= G.dx and np.sum(phi.values == phi.values[i]) == 1
    other = MacroDensity(G, np.exp(-(G.x + 2) ** 2))
    both = MacroDensity(G, narrow.values + other.values)
    diff = limit_potential(both, SIG, 0.3).values - phi.values - limit_potential(other, SIG, 0.3).values
    assert np.max(np.abs(diff)) <= 1e-12 * np.max(np.abs(phi.values))
    with pytest.raises(InvalidParameter):
        limit_potential(narrow, SIG, 0.0)


def test_gradient_consistent_with_values():
    phi = limit_potential(MacroDensity(G, np.exp(-G.x**2)), SIG, 1.0)
    fd = np.gradient(phi.values, G.dx)
    assert np.max(np.abs(fd[2:-2] - phi.gradient[2:-2])) <= 10 * G.dx**2 * np.max(np.abs(phi.values))


def test_direct_wave_trivial_cases():
    zero = np.zeros((11, G.n))
    phi = direct_wave_potential(zero, None, S1, S2, 1.0, 1.0, 0.1, grid=G, n_r=513)
    assert np.all(phi.values == 0.0)
    w = _wave()
    phi = direct_wave_potential(zero, w, S1, S2, 1.0, 1.0, 0.1, grid=G, n_r=1025)
    ref = initial_potential(1.0, w, S1, S2, 1.0)
    assert np.max(np.abs(phi.values - ref.values)) <= 1e-8


def test_direct_wave_equivalence_small():
    dt = 0.02
    rho_of_t = lambda t: np.exp(-(G.x - 0.5 * np.sin(2 * t)) ** 2) * (1 + 0.3 * t)
    H = _history(rho_of_t, dt, 50)
    w = _wave()
    ref = initial_potential(1.0, w, S1, S2, 1.0) - memory_potential(H, build_kernel_table(S2, 1.0, dt), 1.0)
    D = direct_wave_potential(H, w, S1, S2, 1.0, 1.0, dt, n_r=513)
    assert np.max(np.abs(D.values - ref.values)) <= 1e-3 * np.max(np.abs(ref.values))


def test_direct_wave_missing_history():
    with pytest.raises(MissingHistory):
        direct_wave_potential(np.zeros((3, G.n)), None, S1, S2, 1.0, 1.0, 0.1, grid=G)

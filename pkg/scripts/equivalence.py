"""Memory-kernel potential against the directly evolved wave field on one coupled run."""
import argparse

import numpy as np

from vlasovwave import CoupledProblem, ExternalPotential, Grid1D, WaveInitialData, make_bump, phase_bumps, simulate
from vlasovwave.potential import direct_wave_potential

BUMPS = [(-1.0, 0.5, 1.5, 1.5, 1.0), (1.5, -0.5, 1.2, 1.2, 0.7)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--T", type=float, default=1.0)
    args = ap.parse_args()
    g = Grid1D(-8.0, 8.0, args.n)
    x = g.x
    f0 = phase_bumps(g, g, BUMPS)
    s1, s2 = make_bump(1, 1.0, 2.0), make_bump(3, 1.0, 2.0)
    wave = WaveInitialData(g, psi0=((np.exp(-x**2 / 4), make_bump(3, 1.5, 0.7)),),
                           psi1=((np.exp(-(x - 1) ** 2), make_bump(3, 0.8, 0.5)),))
    print("dt,n_r,relative_gap")
    prev = None
    for dt, n_r in ((0.02, 513), (0.01, 1025), (0.005, 2049)):
        run = simulate(CoupledProblem(f0, s1, s2, ExternalPotential("harmonic", 1.0), wave, T=args.T, dt=dt,
                                      track_wave=False, stride=0, n_r=n_r))
        ref = run.potentials.values[-1]
        D = direct_wave_potential(run.history, wave, s1, s2, 1.0, args.T, dt, n_r=n_r)
        gap = np.max(np.abs(D.values - ref)) / np.max(np.abs(ref))
        note = f"  order {np.log2(prev / gap):.2f}" if prev else ""
        print(f"{dt:g},{n_r},{gap:.3e}{note}")
        prev = gap


if __name__ == "__main__":
    main()

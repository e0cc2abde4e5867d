"""Mass and energy drift of the coupled marching solver under time-step halving."""
import argparse

import numpy as np

from vlasovwave import CoupledProblem, ExternalPotential, Grid1D, make_bump, phase_bumps, simulate

BUMPS = [(-1.0, 0.5, 1.5, 1.5, 1.0), (1.5, -0.5, 1.2, 1.2, 0.7)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--dt", type=float, nargs="+", default=[0.02, 0.01, 0.005])
    ap.add_argument("--coupling", default="memory", choices=["memory", "direct-wave"])
    ap.add_argument("--eps", type=float, default=None)
    args = ap.parse_args()
    g = Grid1D(-8.0, 8.0, args.n)
    f0 = phase_bumps(g, g, BUMPS)
    s1, s2 = make_bump(1, 1.0, 2.0), make_bump(3, 1.0, 2.0)
    print("dt,mass_drift_per_time,energy_drift")
    for dt in args.dt:
        run = simulate(CoupledProblem(f0, s1, s2, ExternalPotential("harmonic", 1.0), eps=args.eps, T=args.T,
                                      dt=dt, coupling=args.coupling, stride=0))
        M = np.array([r.mass for r in run.records])
        E = np.array([r.total for r in run.records])
        print(f"{dt:g},{np.max(np.abs(M - M[0])) / M[0] / args.T:.3e},{np.max(np.abs(E - E[0])) / abs(E[0]):.3e}")


if __name__ == "__main__":
    main()

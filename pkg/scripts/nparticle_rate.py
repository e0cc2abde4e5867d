"""W1 distance between N-particle runs and the grid solution as N grows."""
import argparse

import numpy as np

from vlasovwave import RateFit, wasserstein1
from vlasovwave.cli import sample_particles
from vlasovwave.config import build_problem, parse_config
from vlasovwave.transport import nparticle_simulate, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/quick.cfg")
    ap.add_argument("--N", type=int, nargs="+", default=[250, 1000, 4000, 16000])
    ap.add_argument("--seeds", type=int, default=4)
    args = ap.parse_args()
    cfg = parse_config(args.config)
    pb = build_problem(cfg, "memory")
    pb.track_wave = False
    grid = simulate(pb).final.density()
    means = []
    print("N,mean_w1")
    for N in args.N:
        d = []
        for seed in range(args.seeds):
            start, w = sample_particles(cfg, N, np.random.default_rng(seed))
            rec = nparticle_simulate(start, w, pb, grid=cfg.x_grid)
            d.append(wasserstein1((rec.X[-1], rec.weights), grid))
        means.append(np.mean(d))
        print(f"{N},{means[-1]:.4e}")
    print(f"log-log slope {RateFit.loglog(args.N, means).slope:.3f}")


if __name__ == "__main__":
    main()

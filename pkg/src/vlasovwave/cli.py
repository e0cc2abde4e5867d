"""Command line entry point ``vwlab``.

Exit codes: 0 success, 2 configuration error, 3 hypothesis violation,
4 solver abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import io
from .config import SimulationConfig, build_problem, config_from_text, sweep_plan, validate
from .errors import ConfigError, HypothesisViolation, InvalidParameter, SolverAbort, VlasovWaveError

log = logging.getLogger("vlasovwave")

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_ABORT = 0, 2, 3, 4
COMMANDS = ("kernels", "simulate", "picard", "sweep", "vpkernel", "validate", "nparticle")


def _header(cfg: SimulationConfig, **extra) -> dict:
    return {"config_hash": cfg.hash, **extra}


def _write_run(out: Path, cfg: SimulationConfig, run, summary: dict, snapshots=None, energy=True) -> None:
    head = _header(cfg)
    io.write_csv(out / "diagnostics.csv", diag.COLUMNS, run.diagnostics_table(), head)
    snapshots = run.snapshots if snapshots is None else snapshots
    for i, snap in enumerate(snapshots):
        io.write_snapshot(out / f"snapshot_{i:05d}.bin", snap, cfg.dims.d, cfg.dims.n)
    recs = run.records
    summary.update({"steps": len(recs) - 1, "snapshots": len(snapshots), "mass_initial": recs[0].mass,
                    "mass_final": recs[-1].mass, "undershoot_mass_final": recs[-1].clipped_mass})
    if energy:
        E = np.array([r.total for r in recs])
        summary["energy_initial"] = E[0]
        summary["energy_max_relative_drift"] = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))
    for note in run.warnings:
        summary.setdefault("warning", note)


def cmd_kernels(cfg, out: Path, summary: dict) -> None:
    from .memorykernel import build_kernel_table

    s1, s2 = cfg.form_factors()
    tab = build_kernel_table(s2, cfg.kernels.t_max, cfg.kernels.dt, c=cfg.run.c)
    tab.to_csv(out / "kernel.csv", _header(cfg))
    summary.update({"n": tab.n, "t_max": tab.t_max, "kappa": tab.kappa if tab.kappa is not None else "infinite",
                    "tail_K": tab.tail_K if tab.tail_K is not None else "n/a",
                    "partial_integral_t_max": tab.partial_integral(tab.t_max)})


def cmd_simulate(cfg, out: Path, summary: dict) -> None:
    from .transport import simulate

    mode = cfg.run.mode if cfg.run.mode in ("memory", "direct-wave", "limit") else "memory"
    run = simulate(build_problem(cfg, mode))
    summary["coupling"] = mode
    _write_run(out, cfg, run, summary)


def cmd_picard(cfg, out: Path, summary: dict) -> None:
    from .transport import picard_solve

    res = picard_solve(build_problem(cfg, "memory"), tol=cfg.tol.picard, max_iter=cfg.tol.picard_max_iter,
                       check_stride=cfg.tol.picard_check_stride)
    gaps = np.array(res.gaps)
    io.write_csv(out / "picard_gaps.csv", ["iteration", "gap"],
                 np.column_stack([np.arange(1, gaps.size + 1), gaps]), _header(cfg))
    summary.update({"iterations": res.iterations, "converged": res.converged, "diverged": res.diverged,
                    "final_gap": gaps[-1] if gaps.size else 0.0})
    # iterates move in a prescribed field without wave tracking, so their
    # energy column is not a conserved quantity; snapshots follow run.stride
    from .transport import clipped

    stride = cfg.run.stride
    snaps = [clipped(s) for k, s in enumerate(res.run.states) if stride > 0 and k % stride == 0] \
        or [clipped(res.run.states[0])]
    _write_run(out, cfg, res.run, summary, snapshots=snaps, energy=False)
    if res.diverged:
        raise SolverAbort("Picard gaps stopped decreasing; the discretisation is too coarse",
                          record={"gaps": list(map(float, gaps))})


def cmd_sweep(cfg, out: Path, summary: dict) -> None:
    from .asymptotics import RateFit, run_epsilon_sweep

    entries = run_epsilon_sweep(sweep_plan(cfg))
    rows = [[e.eps, e.distance, e.rho_l1, e.phi0_probe, e.phi0_bound, e.runtime] for e in entries]
    io.write_csv(out / "sweep.csv", ["eps", "distance", "rho_l1", "phi0_probe", "phi0_bound", "runtime"], rows,
                 _header(cfg, metric=cfg.sweep.metric, T_star=cfg.sweep.T_star))
    d = np.array([e.distance for e in entries])
    summary.update({"strictly_decreasing": bool(np.all(np.diff(d) < 0)),
                    "final_over_first": float(d[-1] / d[0]) if d[0] > 0 else 0.0})
    if np.all(d > 0) and d.size > 1:
        fit = RateFit.loglog([e.eps for e in entries], d)
        (out / "rate_fit.txt").write_text("\n".join(io.header_lines(_header(cfg))) + "\n" + fit.to_text())
        summary["fitted_slope"] = fit.slope


def cmd_vpkernel(cfg, out: Path, summary: dict) -> None:
    from .asymptotics import vp_kernel_rate_study
    from .formfactors import kernel_gap_norm

    study = vp_kernel_rate_study(cfg.eps_list("vpkernel"), cfg.vpkernel.q)
    io.write_csv(out / "vpkernel.csv", ["eps", "gap_norm", "inner_factor_norm"],
                 np.column_stack([study.eps, study.gaps, study.inner]), _header(cfg, q=cfg.vpkernel.q))
    (out / "rate_fit.txt").write_text("\n".join(io.header_lines(_header(cfg))) + "\n[gap]\n"
                                      + study.gap_fit.to_text() + "[inner]\n" + study.inner_fit.to_text())
    summary.update({"gap_slope": study.gap_fit.slope, "inner_slope": study.inner_fit.slope,
                    "gaps_strictly_decreasing": study.strictly_decreasing,
                    "no_cutoff_control": kernel_gap_norm(1.0, cfg.vpkernel.q, cutoff=False)})


def cmd_validate(cfg, out: Path, summary: dict) -> int:
    from .validation import run_suite

    results = run_suite()
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, ok, detail, _ in results]
    (out / "validate.txt").write_text("\n".join(io.header_lines(_header(cfg)) + lines) + "\n")
    for line, (*_, secs) in zip(lines, results):
        print(f"{line} ({secs:.2f} s)")
    failed = sum(not ok for _, ok, _, _ in results)
    summary.update({"checks": len(results), "failed": failed})
    return EXIT_OK if failed == 0 else EXIT_ABORT


def sample_particles(cfg, N: int, rng: np.random.Generator):
    """Positions and velocities drawn from the initial bumps.

    d = 1 samples the gridded f0 (cell-uniform within each cell); d = 3
    draws uniformly in balls of radius rx, rv around (x0, 0, 0), (v0, 0, 0)
    with probability proportional to the bump mass.
    """
    from .transport import FlowPoint

    if cfg.dims.d == 1:
        f0 = cfg.initial_state()
        p = f0.values.ravel() / f0.values.sum()
        idx = rng.choice(p.size, size=N, p=p)
        X, P = f0.mesh()
        gx, gv = f0.x_grid, f0.v_grid
        x = X.ravel()[idx] + (rng.random(N) - 0.5) * gx.dx
        v = P.ravel()[idx] + (rng.random(N) - 0.5) * gv.dx
        return FlowPoint(x, v), np.full(N, f0.mass / N)
    bumps = np.array(cfg.bumps())
    w = bumps[:, 2] ** 3 * bumps[:, 3] ** 3 * bumps[:, 4]
    which = rng.choice(len(bumps), size=N, p=w / w.sum())

    def ball(radius):
        u = rng.normal(size=(N, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * (radius * rng.random(N) ** (1.0 / 3.0))[:, None]

    x = ball(bumps[which, 2])
    x[:, 0] += bumps[which, 0]
    v = ball(bumps[which, 3])
    v[:, 0] += bumps[which, 1]
    return FlowPoint(x, v), np.full(N, 1.0 / N)


def cmd_nparticle(cfg, out: Path, summary: dict) -> None:
    from .transport import nparticle_simulate, simulate

    rng = np.random.default_rng(cfg.run.seed)
    start, w = sample_particles(cfg, cfg.nparticle.N, rng)
    pb = build_problem(cfg, "memory")
    if cfg.dims.d == 3:
        pb.wave = None
    rec = nparticle_simulate(start, w, pb, grid=cfg.x_grid if cfg.dims.d == 1 else None)
    if cfg.dims.d == 1:
        cols, data = ["weight", "x", "v"], np.column_stack([rec.weights, rec.X[-1], rec.Xi[-1]])
    else:
        cols = ["weight", "x1", "x2", "x3", "v1", "v2", "v3"]
        data = np.column_stack([rec.weights, rec.X[-1], rec.Xi[-1]])
    io.write_csv(out / "particles_final.csv", cols, data, _header(cfg, t=rec.times[-1]))
    summary.update({"N": cfg.nparticle.N, "t_final": rec.times[-1]})
    if cfg.dims.d == 1:
        pb.track_wave = False
        grid_run = simulate(pb)
        summary["w1_to_grid"] = diag.wasserstein1((rec.X[-1], rec.weights), grid_run.final.density())


HANDLERS = {"kernels": cmd_kernels, "simulate": cmd_simulate, "picard": cmd_picard, "sweep": cmd_sweep,
            "vpkernel": cmd_vpkernel, "validate": cmd_validate, "nparticle": cmd_nparticle}
MODE_OF = {"kernels": "kernels", "simulate": None, "picard": "picard", "sweep": "sweep",
           "vpkernel": "vpkernel", "validate": "validate", "nparticle": "nparticle"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vwlab", description="Vlasov-wave numerical lab")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="flat key = value configuration file")
    ap.add_argument("--out", type=Path, default=Path("vwlab_out"), help="run directory")
    ap.add_argument("--threads", type=int, default=1, help="recorded only; numpy decides its own threading")
    ap.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load(args) -> SimulationConfig:
    if args.config is not None and not args.config.is_file():
        raise ConfigError(f"config file not found: {args.config}")
    cfg = config_from_text(args.config.read_text()) if args.config else SimulationConfig()
    mode = MODE_OF[args.command]
    if mode is not None:
        cfg.run.mode = mode
    elif cfg.run.mode not in ("memory", "direct-wave", "limit"):
        cfg.run.mode = "memory"
    if args.seed is not None:
        cfg.run.seed = args.seed
    return validate(cfg)


def run(cfg: SimulationConfig, command: str, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(f"# config_hash = {cfg.hash}\n" + cfg.to_text())
    summary = {"command": command}
    summary.update({f"check.{k}": v for k, v in cfg.report.items()})
    t0 = time.perf_counter()
    try:
        code = HANDLERS[command](cfg, out, summary) or EXIT_OK
    except SolverAbort as exc:
        rec = {"error": "solver-abort", "message": str(exc), **{k: v for k, v in exc.record.items()}}
        io.write_summary(out / "failure.txt", rec, _header(cfg))
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    # wall-clock time goes to the log only, so run directories stay byte-identical
    log.info("%s finished in %.3f s", command, time.perf_counter() - t0)
    io.write_summary(out / "summary.txt", summary, _header(cfg))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load(args)
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ConfigError, InvalidParameter, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg, args.command, args.out)
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (InvalidParameter, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VlasovWaveError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())

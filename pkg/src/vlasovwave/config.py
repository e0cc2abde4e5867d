"""Run configuration: flat ``section.key = value`` text, dataclass sections, validation.

Lines starting with ``#`` or ``;`` are comments.  Lists are comma separated;
bump lists are ``;``-separated groups of numbers.  Every key has a default,
so an empty file is a valid configuration.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, HypothesisViolation, InvalidParameter
from .formfactors import FormFactor, make_bump
from .grids import Grid1D, phase_bumps
from .potential import WaveInitialData

MODES = ("memory", "direct-wave", "limit", "nparticle", "picard", "sweep", "kernels", "validate", "vpkernel")


@dataclass
class RunSection:
    mode: str = "memory"
    T: float = 2.0
    dt: float = 0.01
    c: float = 1.0
    eps: float = 0.0  # 0 means the unscaled system
    stride: int = 10
    seed: int = 0
    track_wave: bool = True
    n_r: int = 1025


@dataclass
class DimsSection:
    d: int = 1
    n: int = 3


@dataclass
class GridSection:
    x_min: float = -8.0
    x_max: float = 8.0
    nx: int = 256
    v_min: float = -8.0
    v_max: float = 8.0
    nv: int = 256
    auto: bool = True  # size the box from the a-priori radius; off once bounds are given
    override: bool = False  # accept a box smaller than the a-priori radius


@dataclass
class PotentialSection:
    kind: str = "harmonic"
    param: float = 1.0
    xs: str = ""
    vs: str = ""


@dataclass
class FormFactorSection:
    radius: float = 1.0
    mass: float = 2.0


@dataclass
class InitialSection:
    # x0 v0 rx rv height; ...
    bumps: str = "-1.0 0.5 1.5 1.5 1.0; 1.5 -0.5 1.2 1.2 0.7"


@dataclass
class WaveSection:
    # center width radius mass; ...  a(x) = exp(-((x-center)/width)^2), b = bump(n, radius, mass)
    psi0: str = ""
    psi1: str = ""


@dataclass
class ToleranceSection:
    mass: float = 1e-6
    picard: float = 1e-8
    picard_max_iter: int = 30
    picard_check_stride: int = 5


@dataclass
class SweepSection:
    eps: str = "1, 0.25, 0.0625, 0.015625"
    T_star: float = 1.0
    metric: str = "w1"


@dataclass
class ParticleSection:
    N: int = 1000
    dim: int = 1


@dataclass
class KernelSection:
    t_max: float = 200.0
    dt: float = 0.01


@dataclass
class VPKernelSection:
    eps: str = "1, 0.25, 0.0625, 0.015625"
    q: float = 2.0


@dataclass
class SimulationConfig:
    run: RunSection = field(default_factory=RunSection)
    dims: DimsSection = field(default_factory=DimsSection)
    grid: GridSection = field(default_factory=GridSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    sigma1: FormFactorSection = field(default_factory=FormFactorSection)
    sigma2: FormFactorSection = field(default_factory=FormFactorSection)
    f0: InitialSection = field(default_factory=InitialSection)
    wave: WaveSection = field(default_factory=WaveSection)
    tol: ToleranceSection = field(default_factory=ToleranceSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    nparticle: ParticleSection = field(default_factory=ParticleSection)
    kernels: KernelSection = field(default_factory=KernelSection)
    vpkernel: VPKernelSection = field(default_factory=VPKernelSection)
    report: dict = field(default_factory=dict, compare=False)

    # -- text form ---------------------------------------------------------

    def items(self):
        for sec in fields(self):
            if sec.name == "report":
                continue
            obj = getattr(self, sec.name)
            for f in fields(obj):
                yield f"{sec.name}.{f.name}", getattr(obj, f.name)

    def to_text(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.items())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    # -- derived objects ---------------------------------------------------

    @property
    def x_grid(self) -> Grid1D:
        return Grid1D(self.grid.x_min, self.grid.x_max, self.grid.nx)

    @property
    def v_grid(self) -> Grid1D:
        return Grid1D(self.grid.v_min, self.grid.v_max, self.grid.nv)

    def external_potential(self):
        from .transport import ExternalPotential

        p = self.potential
        if p.kind == "table":
            return ExternalPotential("table", 0.0, tuple(_floats(p.xs)), tuple(_floats(p.vs)))
        return ExternalPotential(p.kind, p.param)

    def form_factors(self) -> tuple[FormFactor, FormFactor]:
        return (make_bump(self.dims.d, self.sigma1.radius, self.sigma1.mass),
                make_bump(self.dims.n, self.sigma2.radius, self.sigma2.mass))

    def bumps(self):
        return _groups(self.f0.bumps, 5, "f0.bumps")

    def initial_state(self):
        return phase_bumps(self.x_grid, self.v_grid, self.bumps())

    def wave_data(self) -> WaveInitialData | None:
        if not (self.wave.psi0.strip() or self.wave.psi1.strip()):
            return None
        g = self.x_grid
        n = self.dims.n

        def terms(text, key):
            out = []
            for c0, w, r, m in _groups(text, 4, key):
                if w <= 0 or r <= 0:
                    raise ConfigError(f"{key}: width and radius must be positive")
                out.append((np.exp(-((g.x - c0) / w) ** 2), make_bump(n, r, m)))
            return tuple(out)

        return WaveInitialData(g, terms(self.wave.psi0, "wave.psi0"), terms(self.wave.psi1, "wave.psi1"))

    def eps_list(self, key: str = "sweep") -> tuple:
        return tuple(_floats(getattr(self, key).eps))


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _floats(text: str):
    text = text.strip()
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()] if text else []


def _groups(text: str, width: int, key: str):
    out = []
    for grp in text.split(";"):
        if not grp.strip():
            continue
        try:
            vals = [float(t) for t in grp.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        if len(vals) != width:
            raise ConfigError(f"{key}: each group needs {width} numbers, got {len(vals)}")
        out.append(tuple(vals))
    return out


def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {raw!r}")
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return raw


def config_from_text(text: str) -> SimulationConfig:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[top]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    cfg = SimulationConfig()
    unknown = []
    for key, raw in parser["top"].items():
        sec, _, name = key.partition(".")
        obj = getattr(cfg, sec, None) if sec != "report" else None
        if obj is None or not name or name not in {f.name for f in fields(obj)}:
            unknown.append(key)
            continue
        setattr(obj, name, _coerce(raw, getattr(obj, name), key))
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(sorted(unknown)))
    given = set(parser["top"])
    if "grid.auto" not in given and given & {"grid.x_min", "grid.x_max", "grid.v_min", "grid.v_max"}:
        cfg.grid.auto = False
    return cfg


def parse_config(path) -> SimulationConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cfg = config_from_text(p.read_text())
    validate(cfg)
    return cfg


# ----------------------------------------------------------------------------
# validation


def potential_norm(cfg: SimulationConfig, mass: float) -> float:
    """N = ||Phi_0||_{C^1} + |||L|||_{B_T} R_0 from the interaction-potential estimates.

    Sobolev norms are sums of derivative L^2 norms.  The wave speed enters
    the Phi_0 time derivative through a factor max(1, c).
    """
    s1, s2 = cfg.form_factors()
    T = cfg.run.T
    c = 1.0 / np.sqrt(cfg.run.eps) if cfg.run.eps > 0 else cfg.run.c
    gain = 1.0 / cfg.run.eps if cfg.run.eps > 0 else 1.0
    L = gain * s1.sobolev_norm(1) ** 2 * s2.lp_norm(2) ** 2 * (T + 0.5 * T * T)
    wave = cfg.wave_data()
    phi0 = 0.0
    if wave is not None:
        n0, n1 = wave.l2_norms()
        phi0 = s1.lp_norm(2) * s2.sobolev_norm(1) * max(1.0, c) * (2.0 * n0 + (1.0 + T) * n1)
    return float(phi0 + L * mass)


@lru_cache(maxsize=1)
def _bump_area() -> float:
    """Integral of exp(1 - 1/(1 - s^2)) over the unit disc."""
    val, _ = quad(lambda s: 2.0 * np.pi * s * np.exp(1.0 - 1.0 / (1.0 - s * s)), 0.0, 1.0)
    return float(val)


def required_radius(cfg: SimulationConfig) -> float:
    """Largest a-priori radius over the corners of the initial bumps."""
    from .transport import FlowPoint, apriori_radius

    V = cfg.external_potential()
    pts = []
    mass = 0.0
    for x0, v0, rx, rv, h in cfg.bumps():
        pts += [(x0 + sx * rx, v0 + sv * rv) for sx in (-1, 1) for sv in (-1, 1)]
        mass += h * rx * rv * _bump_area()
    if not pts:
        return 0.0
    pts = np.array(pts)
    norm = potential_norm(cfg, mass)
    return float(np.max(apriori_radius(norm, cfg.run.T, FlowPoint(pts[:, 0], pts[:, 1]), V)))


def validate(cfg: SimulationConfig) -> SimulationConfig:
    """Range checks and the hypothesis checks; results go to ``cfg.report``."""
    r = cfg.run
    if r.mode not in MODES:
        raise ConfigError(f"run.mode must be one of {', '.join(MODES)}, got {r.mode!r}")
    if not (r.T > 0 and r.dt > 0):
        raise ConfigError("run.T and run.dt must be positive")
    if abs(round(r.T / r.dt) * r.dt - r.T) > 1e-9 * r.T:
        raise ConfigError("run.T must be a multiple of run.dt")
    if r.c <= 0:
        raise ConfigError("run.c must be positive")
    if not 0 <= r.eps <= 1:
        raise ConfigError("run.eps must lie in [0, 1]")
    if cfg.dims.d not in (1, 3) or cfg.dims.n < 1:
        raise ConfigError("dims.d must be 1 (grid) or 3 (particles), dims.n >= 1")
    if cfg.dims.d == 3 and r.mode not in ("nparticle", "kernels", "vpkernel", "validate"):
        raise ConfigError("gridded transport is one-dimensional; use dims.d = 1")
    try:
        cfg.x_grid, cfg.v_grid
    except InvalidParameter as exc:
        raise ConfigError(f"grid: {exc}") from None
    rep = {}
    # H1
    if cfg.sigma1.mass < 0 or cfg.sigma2.mass < 0:
        raise HypothesisViolation("H1", "form factors must be nonnegative")
    if cfg.sigma1.radius <= 0 or cfg.sigma2.radius <= 0:
        raise ConfigError("form factor radii must be positive")
    rep["H1"] = "ok"
    # H2
    try:
        V = cfg.external_potential()
    except InvalidParameter as exc:
        raise ConfigError(f"potential: {exc}") from None
    C = V.lower_bound_constant
    if not np.isfinite(C):
        raise HypothesisViolation("H2", "V(x) >= -C(1+|x|^2) fails for every C")
    rep["H2"] = f"C = {C:.6g}"
    # H4
    bumps = cfg.bumps()
    for b in bumps:
        if b[2] <= 0 or b[3] <= 0:
            raise ConfigError("f0.bumps radii must be positive")
        if b[4] < 0:
            raise HypothesisViolation("H4", "f0 must be nonnegative")
    rep["H4"] = "ok"
    # H7 for sweeps
    if r.mode == "sweep":
        if not V.is_nonnegative():
            raise HypothesisViolation("H7", "the external potential must be non negative")
        eps = cfg.eps_list()
        if not eps or np.any(np.diff(eps) >= 0) or min(eps) <= 0 or max(eps) > 1:
            raise ConfigError("sweep.eps must be strictly decreasing values in (0, 1]")
        if cfg.dims.n <= 2:
            raise HypothesisViolation("n>=3", f"kappa is infinite for n = {cfg.dims.n}")
        rep["H7"] = "ok"
    # H8 / H9
    wave = cfg.wave_data()
    if wave is not None:
        e = wave.energy_vib(r.eps if r.eps > 0 else 1.0)
        if not np.isfinite(e):
            raise HypothesisViolation("H8", "the rescaled initial energy is not finite")
        rep["H8"] = f"vibrational energy = {e:.6g}"
    hmax = max((b[4] for b in bumps), default=0.0)
    if not np.isfinite(hmax):
        raise HypothesisViolation("H9", "f0 must be bounded")
    rep["H9"] = f"sup f0 = {hmax:.6g}"
    # box against the a-priori radius
    if r.mode not in ("kernels", "vpkernel") and cfg.dims.d == 1:
        R = required_radius(cfg)
        rep["apriori_radius"] = R
        g = cfg.grid
        if g.auto:
            g.x_min, g.x_max, g.v_min, g.v_max = -R, R, -R, R
        box = min(-g.x_min, g.x_max, -g.v_min, g.v_max)
        if box < R and not g.override:
            raise ConfigError(f"grid half-width {box:.6g} is smaller than the a-priori radius {R:.6g}; "
                              "enlarge the grid, set grid.auto = true or grid.override = true")
    cfg.report = rep
    return cfg


# ----------------------------------------------------------------------------
# problem construction


def build_problem(cfg: SimulationConfig, coupling: str | None = None):
    from .memorykernel import kappa
    from .transport import CoupledProblem

    s1, s2 = cfg.form_factors()
    mode = coupling or cfg.run.mode
    if mode not in ("memory", "direct-wave", "limit", "none", "picard"):
        mode = "memory"
    if mode == "picard":
        mode = "memory"
    r = cfg.run
    return CoupledProblem(
        cfg.initial_state(), s1, s2, cfg.external_potential(), cfg.wave_data(),
        c=r.c, eps=r.eps if r.eps > 0 else None, T=r.T, dt=r.dt, coupling=mode,
        track_wave=r.track_wave, n_r=r.n_r, stride=r.stride, mass_tol=cfg.tol.mass,
        kappa=kappa(s2) if mode == "limit" else None)


def sweep_plan(cfg: SimulationConfig):
    from .asymptotics import EpsilonSweepPlan

    s1, s2 = cfg.form_factors()
    return EpsilonSweepPlan(cfg.initial_state(), s1, s2, cfg.external_potential(), cfg.wave_data(),
                            cfg.eps_list(), cfg.sweep.T_star, cfg.run.dt, cfg.sweep.metric)

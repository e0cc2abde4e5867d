"""Numerical lab for a Vlasov equation coupled to a wave field through form factors."""
from .errors import (ConfigError, DivergentConstant, ExtendTable, HypothesisViolation, InvalidParameter,
                     OutOfDomain, OutOfRangeExponent, SolverAbort, UndefinedDistance, VlasovWaveError)
from .formfactors import FormFactor, make_bump, mollified_coulomb, self_convolve
from .grids import Grid1D, MacroDensity, PhaseSpaceState, phase_bumps
from .memorykernel import KernelTable, build_kernel_table, eval_kernel, kappa, partial_integral, q_values
from .transport import (CoupledProblem, ExternalPotential, FlowPoint, PotentialPath, apriori_radius,
                        liouville_pushforward, nparticle_simulate, picard_solve, simulate, trace_flow)
from .diagnostics import DiagnosticsRecord, moments, total_energy, wasserstein1
from .asymptotics import EpsilonSweepPlan, RateFit, run_epsilon_sweep, vp_kernel_rate_study
from .potential import WaveInitialData, direct_wave_potential, initial_potential, memory_potential
from .config import SimulationConfig, parse_config, validate

__version__ = "0.1.0"

"""Pseudo-spectral solver and verification harness for compressible
two-phase flow coupled to a phase field on a periodic box."""

from .config import DiagSpec, ICSpec, OutSpec, RunConfig, build_run_config, load_config
from .diagnostics import (
    InvariantReport,
    LevelEnergy,
    NegativeFunctional,
    decay_suite,
    energy_ledger,
    invariant_monitor,
    level_energy,
    negative_functional,
)
from .errors import (
    ConfigError,
    InfeasibleInitialCondition,
    InvariantViolation,
    NsacError,
    QuadratureError,
    VacuumError,
)
from .initial import make_initial
from .integrate import RunSummary, StepConfig, Stepper, adaptive_dt, run, step
from .model import (
    EnergyReport,
    PhysParams,
    State,
    Tendency,
    capillary_divergence,
    chemical_potential,
    g_potential,
    pressure,
    pressure_prime,
    rhs,
    total_energy,
)
from .oracle import DataProfile, DecayFit, SymbolBlock, build_symbol, decay_norm, evolve_mode, fit_exponent
from .spectral import (
    Grid,
    SpectralField,
    fractional_laplacian,
    gn_ratio,
    hk_norm_sq,
    interpolation_check,
    lp_norm,
    negative_norm,
    sobolev_norm,
)

__version__ = "0.1.0"

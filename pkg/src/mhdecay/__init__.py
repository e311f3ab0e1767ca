"""Maxwell-Higgs fields on the Schwarzschild exterior: characteristic evolution,
multiplier-energy diagnostics and late-time decay analysis."""

from .geometry import BackgroundParams, DomainError, lapse, radius_from_tortoise, tortoise
from .fields import PotentialSpec
from .evolution import GridSpec, InitialData, ModeSpec, evolve, evolve_mode, evolve_traced
from .diagnostics import MultiplierSpec, bulk_integral, divergence_residual, slice_energy
from .decay import CurveSpec, check_envelope, extract_series, fit_exponent
from .config import ConfigError, load_config
from .runner import convergence, run
from .acceptance import verify

__all__ = [
    "BackgroundParams",
    "ConfigError",
    "CurveSpec",
    "DomainError",
    "GridSpec",
    "InitialData",
    "ModeSpec",
    "MultiplierSpec",
    "PotentialSpec",
    "bulk_integral",
    "check_envelope",
    "convergence",
    "divergence_residual",
    "evolve",
    "evolve_mode",
    "evolve_traced",
    "extract_series",
    "fit_exponent",
    "lapse",
    "load_config",
    "radius_from_tortoise",
    "run",
    "slice_energy",
    "tortoise",
    "verify",
]

__version__ = "0.1.0"

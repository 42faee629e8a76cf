"""Kronecker-structured Maximum Entropy on the Mean source imaging."""

from .core import KroneckerCovariance, NotSPDError, kron_apply, trace_quad, unvec, vec
from .covariance import flip_flop, loglik_kron
from .mem import (
    STAGES,
    MemConfig,
    MemModel,
    ParcelPrior,
    SourceEstimate,
    free_energy,
    free_energy_and_gradient,
    invert,
    invert_stages,
    solve_gaussian_reference,
)
from .optimizer import OptimizerConfig, maximize
from .pipeline import DeskStudyConfig, run_desk_study

__version__ = "0.1.0"

__all__ = [
    "STAGES", "DeskStudyConfig", "KroneckerCovariance", "MemConfig", "MemModel",
    "NotSPDError", "OptimizerConfig", "ParcelPrior", "SourceEstimate", "flip_flop",
    "free_energy", "free_energy_and_gradient", "invert", "invert_stages", "kron_apply",
    "loglik_kron", "maximize", "run_desk_study", "solve_gaussian_reference",
    "trace_quad", "unvec", "vec",
]

"""Diffusion-limit generator, Fokker-Planck solvers, SDE ensembles and comparisons."""

from .compare import (
    ComparisonReport,
    effective_gamma,
    fp_localization_slope,
    group_reflections,
    group_transmission,
    linear_fit,
    microscopic_vs_diffusion,
)
from .fokker_planck import (
    CellGrid,
    FPSolution,
    evolve_d1,
    evolve_rho,
    evolve_transmission_2x2,
    fp_operator,
    moment_inequality,
)
from .generator import (
    Gammas,
    GeneratorCoeffs,
    ReflectionCoordinates,
    d1_coeffs,
    generator_coeffs,
    generator_matrix_form,
    rho_coeffs,
    transmission_coeffs,
)
from .sde import SdeEnsemble, sde_ensemble, sde_transmission

__all__ = [
    "CellGrid",
    "ComparisonReport",
    "FPSolution",
    "Gammas",
    "GeneratorCoeffs",
    "ReflectionCoordinates",
    "SdeEnsemble",
    "d1_coeffs",
    "effective_gamma",
    "evolve_d1",
    "evolve_rho",
    "evolve_transmission_2x2",
    "fp_localization_slope",
    "fp_operator",
    "generator_coeffs",
    "generator_matrix_form",
    "group_reflections",
    "group_transmission",
    "linear_fit",
    "microscopic_vs_diffusion",
    "moment_inequality",
    "rho_coeffs",
    "sde_ensemble",
    "sde_transmission",
    "transmission_coeffs",
]

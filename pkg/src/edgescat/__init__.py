"""Disordered transport along Dirac edge channels: modes, scattering and diffusion limits."""

__version__ = "0.1.0"

from .disorder import (
    CouplingPlan,
    CouplingStrengths,
    DisorderPath,
    OuParams,
    ScaleParams,
    build_plan,
    potential_at,
    sample_ou,
)
from .scattering import (
    ScatteringMatrix,
    conductance,
    kramers_check,
    protected_inputs,
    scatter,
    trs_defects,
)
from .spectral import (
    Grid,
    MassProfile,
    ProfileKind,
    SpectralBasis,
    adjoint_spectrum,
    discretize_ladder,
    transverse_spectrum,
)
from .transport import (
    IntegratorConfig,
    TransferMatrix,
    evolve_amplitudes,
    flux_defect,
    propagate,
    propagate_ensemble,
)
from .waveguide import (
    BlockConfig,
    ModeSystem,
    assemble_system,
    classify_modes,
    dispersion_table,
)

__all__ = [
    "BlockConfig",
    "CouplingPlan",
    "CouplingStrengths",
    "DisorderPath",
    "Grid",
    "IntegratorConfig",
    "MassProfile",
    "ModeSystem",
    "OuParams",
    "ProfileKind",
    "ScaleParams",
    "ScatteringMatrix",
    "SpectralBasis",
    "TransferMatrix",
    "adjoint_spectrum",
    "assemble_system",
    "build_plan",
    "classify_modes",
    "conductance",
    "discretize_ladder",
    "dispersion_table",
    "evolve_amplitudes",
    "flux_defect",
    "kramers_check",
    "potential_at",
    "propagate",
    "propagate_ensemble",
    "protected_inputs",
    "sample_ou",
    "scatter",
    "transverse_spectrum",
    "trs_defects",
]

"""Bounds on the maximum photon emission rate of atomic ensembles."""

__version__ = "0.1.0"

from .ensembles import AtomConfiguration, EnsembleSpec, sample_configuration
from .kernels import (
    CavityKernel,
    DipolePattern,
    DirectionalKernel,
    DissipativeMatrix,
    ScalarKernel,
    TensorKernel,
    WaveguideKernel,
    build_matrix,
)
from .spectral import (
    SpectralResult,
    gelfand_estimate,
    l1_norm_squared,
    principal_eigenpair,
    product_state_rate,
    rate_bounds,
    spectral_result,
)
from .sdp import SdpResult, solve_sdp
from .fitting import FitResult, SweepPoint, average_over_realizations, fit_power_law

__all__ = [
    "AtomConfiguration",
    "EnsembleSpec",
    "sample_configuration",
    "CavityKernel",
    "DipolePattern",
    "DirectionalKernel",
    "DissipativeMatrix",
    "ScalarKernel",
    "TensorKernel",
    "WaveguideKernel",
    "build_matrix",
    "SpectralResult",
    "gelfand_estimate",
    "l1_norm_squared",
    "principal_eigenpair",
    "product_state_rate",
    "rate_bounds",
    "spectral_result",
    "SdpResult",
    "solve_sdp",
    "FitResult",
    "SweepPoint",
    "average_over_realizations",
    "fit_power_law",
    "__version__",
]

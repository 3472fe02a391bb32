"""Quantum Fisher information toolkit for frequency-entangled Doppler lidar."""

from .errors import DomainError, NumericalError
from .spectral import (
    DopplerKinematics,
    SchmidtBasis,
    SpectralParams,
    doppler_mu,
    hermite_fn,
    jsa,
    jsa_doppler,
    qfi_velocity,
    schmidt_basis,
    schmidt_mode,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "NumericalError",
    "DopplerKinematics",
    "SchmidtBasis",
    "SpectralParams",
    "doppler_mu",
    "hermite_fn",
    "jsa",
    "jsa_doppler",
    "qfi_velocity",
    "schmidt_basis",
    "schmidt_mode",
    "__version__",
]

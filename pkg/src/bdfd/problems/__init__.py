"""Concrete elliptic-parabolic test problems."""
from .biot import REFERENCE_PARAMETERS, BiotParameters, UnitSquareMesh, biot_exact, build_biot_problem, manufactured_forcing
from .coupling import estimate_coupling
from .dde import DdeDemoResult, dde_demo, growth_exponent
from .spectral import build_spectral_problem
from .system import EllipticParabolicSystem, Profile

__all__ = [
    "REFERENCE_PARAMETERS",
    "BiotParameters",
    "DdeDemoResult",
    "EllipticParabolicSystem",
    "Profile",
    "UnitSquareMesh",
    "biot_exact",
    "build_biot_problem",
    "build_spectral_problem",
    "dde_demo",
    "estimate_coupling",
    "manufactured_forcing",
    "growth_exponent",
]

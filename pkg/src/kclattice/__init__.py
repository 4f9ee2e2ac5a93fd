"""Ground states of the discrete Kirchhoff-Choquard equation on boxes in Z^3."""

from .energy import (
    CoercivePotential,
    ConstantPotential,
    Params,
    PeriodicPotential,
    energy_J,
    residual_EL,
)
from .green import KernelTable, QuadratureSpec, build_kernel, cached_kernel
from .lattice import BoxDomain, Field, load_field, save_field
from .nehari import project_pair, project_ray
from .solver import InitSpec, SolveConfig, SolveReport, solve_ground, solve_sign_changing

__all__ = [
    "BoxDomain",
    "Field",
    "load_field",
    "save_field",
    "QuadratureSpec",
    "KernelTable",
    "build_kernel",
    "cached_kernel",
    "Params",
    "ConstantPotential",
    "PeriodicPotential",
    "CoercivePotential",
    "energy_J",
    "residual_EL",
    "project_ray",
    "project_pair",
    "InitSpec",
    "SolveConfig",
    "SolveReport",
    "solve_ground",
    "solve_sign_changing",
]

__version__ = "0.1.0"

"""Numerical lab for unstable solutions of ``Lap u = f(u)`` and Allen-Cahn on spheres."""

__version__ = "0.1.0"

from ._accel import BACKEND, HAS_NUMBA
from .errors import GroundstateError, SolverError, ValidationError
from .field import Field, energy, residual_norm
from .geometry import Domain, build_domain
from .potential import Potential, allen_cahn, find_critical_points, get_potential

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "Domain",
    "Field",
    "GroundstateError",
    "Potential",
    "SolverError",
    "ValidationError",
    "allen_cahn",
    "build_domain",
    "energy",
    "find_critical_points",
    "get_potential",
    "residual_norm",
    "__version__",
]

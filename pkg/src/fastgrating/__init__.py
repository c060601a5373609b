"""Fast direct solver for quasi-periodic Helmholtz scattering by gratings."""

from .geometry import BoundaryCurve, Discretization, discretize, read_geometry, write_geometry
from .periodic_solver import GratingProblem, precompute, solve_angles
from .postprocess import bragg_amplitudes, eval_field, flux_error

__all__ = [
    "BoundaryCurve",
    "Discretization",
    "GratingProblem",
    "bragg_amplitudes",
    "discretize",
    "eval_field",
    "flux_error",
    "precompute",
    "read_geometry",
    "solve_angles",
    "write_geometry",
]

__version__ = "0.1.0"

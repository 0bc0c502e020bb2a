"""Localized orthogonal decomposition for the heterogeneous fractional Laplacian.

The fractional problem is solved through its y^a-weighted extension to the
cylinder Omega x (0, T) with P1 elements, a projective quasi-interpolation
and localized fine-scale correctors.
"""
from .coefficient import CoefficientField, constant_field, load_raster, log_uniform_random_field
from .correctors import CorrectorBasis, DecayRecord, corrector_basis, measure_decay, pou_weight
from .errors import DomainError, SolverError, StructuralError
from .interpolation import ConstraintSet, apply_IH, build_constraints
from .mesh import CylinderMesh, build_cylinder_mesh, classify_nodes, patch, prolongation, refine
from .solvers import (SpectralReference, energy_error, solve_coarse_galerkin, solve_fine,
                      solve_multiscale, solve_spectral_reference)
from .special import FractionalOrder, bessel_k, extension_constant, gamma

__all__ = [
    "CoefficientField", "constant_field", "load_raster", "log_uniform_random_field",
    "CorrectorBasis", "DecayRecord", "corrector_basis", "measure_decay", "pou_weight",
    "DomainError", "SolverError", "StructuralError",
    "ConstraintSet", "apply_IH", "build_constraints",
    "CylinderMesh", "build_cylinder_mesh", "classify_nodes", "patch", "prolongation", "refine",
    "SpectralReference", "energy_error", "solve_coarse_galerkin", "solve_fine",
    "solve_multiscale", "solve_spectral_reference",
    "FractionalOrder", "bessel_k", "extension_constant", "gamma",
]

from .assembly import EllipticityError, SaddleOperator, assemble_scalar, assemble_stokes, body_load, strain_basis, stress_load, symmetry_defect
from .dirichlet import DirichletResult, boundary_values, solve_dirichlet
from .fields import Field, field_norms, l2_norm, subsample_points, sup_norm, sym
from .mesh import Mesh
from .solvers import BreakdownError, CGResult, CompatibilityError, SaddleResult, SaddleSolver, SolverError, solve_saddle, solve_spd

__all__ = [
    "BreakdownError", "CGResult", "DirichletResult", "boundary_values", "solve_dirichlet", "CompatibilityError", "EllipticityError", "Field", "Mesh",
    "SaddleOperator", "SaddleResult", "SaddleSolver", "SolverError", "assemble_scalar",
    "assemble_stokes", "body_load", "field_norms", "l2_norm", "solve_saddle", "solve_spd",
    "strain_basis", "stress_load", "subsample_points", "sup_norm", "sym", "symmetry_defect",
]

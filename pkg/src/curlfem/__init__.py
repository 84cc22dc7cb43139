"""Curl-conforming finite elements for Maxwell cavity problems on
straight and curved tetrahedral meshes, with a convergence-study harness."""

__version__ = "0.1.0"

from .analysis import ConvergenceReport, eoc, emit_report, error_norms, \
    field_norms, pullback_error
from .assembly import AssembledSystem, DofMap, MaterialCoefficients, \
    apply_pec, assemble, build_dof_map, dump_matrix_market, isotropic
from .gmsh_io import MeshFormatError, read_gmsh, write_gmsh
from .interpolation import FemFunction, global_interpolate, local_interpolate
from .mesh import GeometricMap, Mesh, MeshError, MeshQualityReport, \
    element_map, generate_ball_mesh, generate_cube_mesh, quality_check
from .presets import PRESETS, ball_cavity, cube_cavity
from .reference import GeometricShapeSet, NedelecBasis, QuadratureRule, \
    ReferenceTet, eval_basis, geometric_shapes, nedelec_space, quadrature, \
    simplex_moment, triangle_quadrature
from .solver import SolveReport, SolverError, solve
from .transforms import DomainMap, ElementPullback, Field, hausdorff_estimate, \
    inverse_pullback_solution, \
    pullback_field, pullback_solution, radial_domain_map

"""Weak Galerkin finite elements on polygonal meshes."""
from .assembly import AssemblyError, SparseSystem, assemble, condense, energy, local_operators
from .cases import ExperimentReport, get_problem, run_case, run_meshfile
from .mesh import (MeshError, MeshFormatError, PolygonalMesh, build_uniform_rect,
                   build_uniform_tri, read_mesh, refine_barycentric, regularity_report,
                   segment_hanging_edges, write_mesh)
from .postprocess import ErrorTriple, FluxReport, error_norms, fit_rate, flux_report, write_table
from .quadrature import edge_rule, polygon_rule
from .solver import SolveConfig, SolverError, solve_linear, solve_picard, triple_bar_norm
from .space import (Coefficient, WeakFunction, WgSpace, project_Q0, project_Qb, project_Qbold,
                    project_Qh)
from .weak_gradient import build_weak_gradient, verify_commuting_identity, weak_gradient_operator

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "Coefficient", "ErrorTriple", "ExperimentReport", "FluxReport",
    "MeshError", "MeshFormatError", "PolygonalMesh", "SolveConfig", "SolverError",
    "SparseSystem", "WeakFunction", "WgSpace", "assemble", "build_uniform_rect",
    "build_uniform_tri", "build_weak_gradient", "condense", "edge_rule", "energy",
    "error_norms", "fit_rate", "flux_report", "get_problem", "local_operators",
    "polygon_rule", "project_Q0", "project_Qb", "project_Qbold", "project_Qh", "read_mesh",
    "refine_barycentric", "regularity_report", "run_case", "run_meshfile",
    "segment_hanging_edges", "solve_linear", "solve_picard", "triple_bar_norm",
    "verify_commuting_identity", "weak_gradient_operator", "write_mesh", "write_table",
]

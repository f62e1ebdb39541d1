"""Adaptive P1 finite elements for box-constrained elliptic optimal control.

The control is discretized implicitly: it is the pointwise projection of the
discrete adjoint, so only state and adjoint carry finite-element coefficients.
"""
from .adapt import (AdaptRecord, AdaptRun, StopRule, cardinality_constant, fit_slope,
                    run_adaptive, scan_contraction)
from .estimate import Indicators, compute_indicators, compute_oscillation, dorfler_mark
from .fem import (DEGREE2, DEGREE5, Coefficients, P1Space, assemble_load, assemble_mass,
                  assemble_stiffness, energy_norm_error, evaluate_p1, l2_norm_error)
from .linalg import CgReport, SparseMatrix, cg_solve, spmv
from .mesh import DomainSpec, Mesh, audit, bisect, element_geometry, make_initial_mesh, refine
from .ocp import (OcpConvergenceError, OcpProblem, OcpSolution, SolverOptions, kkt_check,
                  project_control, reduced_functional, solve_ocp)

__version__ = "0.1.0"

__all__ = [
    "AdaptRecord", "AdaptRun", "CgReport", "Coefficients", "DEGREE2", "DEGREE5", "DomainSpec",
    "Indicators", "Mesh", "OcpConvergenceError", "OcpProblem", "OcpSolution", "P1Space",
    "SolverOptions", "SparseMatrix", "StopRule", "assemble_load", "assemble_mass",
    "assemble_stiffness", "audit", "bisect", "cardinality_constant", "cg_solve",
    "compute_indicators", "compute_oscillation", "dorfler_mark", "element_geometry",
    "energy_norm_error", "evaluate_p1", "fit_slope", "kkt_check", "l2_norm_error",
    "make_initial_mesh", "project_control", "reduced_functional", "refine", "run_adaptive",
    "scan_contraction", "solve_ocp", "spmv",
]

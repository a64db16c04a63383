"""Varifold approximate mean curvature, second fundamental form and point-cloud curvature flows."""

from .barriers import (BarrierReport, ConvergenceTable, barrier_constant, check_external_barrier,
                       check_internal_barrier, check_weak_external_discrete, convergence_study)
from .curvature import mean_curvature, mean_curvature_field, mean_curvature_tangential, weighted_radius
from .flow import FlowConfig, SolverError, Trajectory, run_flow
from .io import load_cloud, save_cloud
from .kernels import KernelPair, default_bump_pair, get_pair, normalization, validate_natural_pair
from .neighbors import SpatialIndex, build_index, query_radius
from .operators import apply_operator, limit_factor, parse_operator
from .sff import assemble_A, beta, c_matrix, sff_field
from .shapes import ShapeSampler, analytic_mean_curvature, sample_shape
from .varifold import PointCloudVarifold, estimate_tangents_pca, pca_varifold

__version__ = "0.1.0"

__all__ = [
    "BarrierReport", "ConvergenceTable", "FlowConfig", "KernelPair", "PointCloudVarifold", "ShapeSampler",
    "SolverError", "SpatialIndex", "Trajectory", "analytic_mean_curvature", "apply_operator", "assemble_A",
    "barrier_constant", "beta", "build_index", "c_matrix", "check_external_barrier", "check_internal_barrier",
    "check_weak_external_discrete", "convergence_study", "default_bump_pair", "estimate_tangents_pca",
    "get_pair", "limit_factor", "load_cloud", "mean_curvature", "mean_curvature_field",
    "mean_curvature_tangential", "normalization", "parse_operator", "pca_varifold", "query_radius",
    "run_flow", "sample_shape", "save_cloud", "sff_field", "validate_natural_pair", "weighted_radius",
]

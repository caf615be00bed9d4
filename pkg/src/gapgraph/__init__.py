"""Spectral-gap toolkit for Schrodinger operators on compact metric graphs."""

from .graphs import (
    Edge,
    MetricGraph,
    Path,
    PointOnGraph,
    VertexCondition,
    build_graph,
    interval_graph,
    path_graph,
    star_graph,
)
from .potentials import (
    AdmissibleRange,
    CheckResult,
    ConvexOnPaths,
    EdgeProfile,
    Potential,
    SingleWell,
    WellPoint,
    admissible_range,
    check_class,
    check_convex_on_paths,
    check_single_well,
    convex_class,
    indicator,
    make_perturbation,
    ramp,
    signed_distance,
    single_well_class,
    tent,
)
from .solver import (
    Mesh,
    SpectrumResult,
    assemble,
    eigen_diagnostics,
    fundamental_gap,
    lowest_eigenvalues,
    solve_spectrum,
    star_secular_root,
)
from .perturbation import FHReport, certify_non_optimal, fh_integral, fh_matrix

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

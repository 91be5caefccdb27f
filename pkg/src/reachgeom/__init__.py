"""Anisotropic geometry of closed sets: distances, curvatures, tube formulas.

The package measures closed subsets of R^d (d = 2 or 3) through the lens of a
smooth uniformly convex norm: nearest-point projection in the dual norm,
generalized principal curvatures living on the unit normal bundle, curvature
measures with their Steiner-type tube expansions, and the classical rigidity
statements (Heintze-Karcher, Minkowski, soap-bubble classification) realized
as numerical checks over a catalog of test sets.
"""

from .norms import (
    EuclideanNorm,
    EllipsoidalNorm,
    SmoothedLpNorm,
    NonConvergenceError,
    ZeroVectorError,
    make_norm,
)
from .shapes import (
    Ball,
    CapLens,
    ConvexPolytope,
    DisjointUnion,
    Ellipsoid,
    EmptyInteriorError,
    SegmentUnion,
    Shape,
    WulffBody,
    make_catalog_shape,
)
from .projection import (
    BoundaryClass,
    ProjectionResult,
    ReachEstimate,
    classify_boundary_point,
    distance_field,
    global_reach,
    grad_delta,
    nearest_points,
    project,
    reach_along,
    set_distance,
)
from .curvature import (
    BundleSample,
    bundle_sample,
    elementary_symmetric,
    pointwise_mean_curvature,
    pointwise_shape_operator,
)
from .measures import (
    BudgetExceeded,
    CurvatureReport,
    StrataCoverageGap,
    TubeRecord,
    Window,
    curvature_measure,
    fan_bundle,
    phi_perimeter,
    steiner_coefficients,
    steiner_predict,
    tube_polynomial_fit,
    tube_record,
    volume_derivatives,
    voxel_tube_volume,
)
from .theorems import (
    BubbleVerdict,
    PreconditionFailed,
    TheoremVerdict,
    alexandrov_classify,
    heintze_karcher_check,
    lower_bound_rigidity,
    maclaurin_check,
    mean_convexity_ledger,
    minkowski_check,
    symmetric_sums,
)

__all__ = [
    "EuclideanNorm",
    "EllipsoidalNorm",
    "SmoothedLpNorm",
    "NonConvergenceError",
    "ZeroVectorError",
    "make_norm",
    "Ball",
    "CapLens",
    "ConvexPolytope",
    "DisjointUnion",
    "Ellipsoid",
    "EmptyInteriorError",
    "SegmentUnion",
    "Shape",
    "WulffBody",
    "make_catalog_shape",
    "BoundaryClass",
    "ProjectionResult",
    "ReachEstimate",
    "classify_boundary_point",
    "distance_field",
    "global_reach",
    "grad_delta",
    "nearest_points",
    "project",
    "reach_along",
    "set_distance",
    "BundleSample",
    "bundle_sample",
    "elementary_symmetric",
    "pointwise_mean_curvature",
    "pointwise_shape_operator",
    "BudgetExceeded",
    "CurvatureReport",
    "StrataCoverageGap",
    "TubeRecord",
    "Window",
    "curvature_measure",
    "fan_bundle",
    "phi_perimeter",
    "steiner_coefficients",
    "steiner_predict",
    "tube_polynomial_fit",
    "tube_record",
    "volume_derivatives",
    "voxel_tube_volume",
    "BubbleVerdict",
    "PreconditionFailed",
    "TheoremVerdict",
    "alexandrov_classify",
    "heintze_karcher_check",
    "lower_bound_rigidity",
    "maclaurin_check",
    "mean_convexity_ledger",
    "minkowski_check",
    "symmetric_sums",
]

__version__ = "0.1.0"

"""Two-scale grid calculus with certified antisymmetric derivative operators.

The library realises a finite-resolution calculus on value tables over a
two-scale box partition: a weighted grid integral that sees single-point
values, cardinal interpolation bases with strictly positive weights, an
antisymmetric generalized derivative assembled from a smooth/rough
splitting, measure and boundary operators satisfying an exact discrete
divergence theorem, and solvers for ill-posed elliptic, evolution,
spectral and variational problems.
"""

from .partition import (
    GridFunction,
    Partition,
    PartitionConfig,
    PartitionError,
    WeightVector,
    build_partition,
    delta_at,
    norm_p,
    pointwise_inner,
    pointwise_integral,
    restrict,
)
from .sigma import (
    BasisBuildError,
    SigmaBasis,
    build_sigma_basis,
    classify_points,
    select_complete_points,
)
from .spaces import SpaceTower, build_spline_tower
from .stepcalc import (
    StepView,
    read_back,
    spread,
    step_derivative,
    step_integral,
    verify_step_identities,
)

__version__ = "0.1.0"

__all__ = [
    "GridFunction",
    "Partition",
    "PartitionConfig",
    "PartitionError",
    "WeightVector",
    "build_partition",
    "delta_at",
    "norm_p",
    "pointwise_inner",
    "pointwise_integral",
    "restrict",
    "BasisBuildError",
    "SigmaBasis",
    "build_sigma_basis",
    "classify_points",
    "select_complete_points",
    "SpaceTower",
    "build_spline_tower",
    "StepView",
    "read_back",
    "spread",
    "step_derivative",
    "step_integral",
    "verify_step_identities",
    "__version__",
]

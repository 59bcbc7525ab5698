"""Divergence projection of measures onto intersections of convex sets.

The package computes the minimum relative-entropy element of a finite
intersection of constraint sets (moment bounds, fixed marginals,
stochastic-order marginal dominance) over a midpoint grid, by cyclic
single-set projections with a per-cycle correction that divides out the
previous cycle's projection factor.  The naive uncorrected cycle is kept
as a selectable mode because its failure on curved sets is part of what
the test suite demonstrates.
"""

from .constraints import (
    Constraint,
    DualIncrement,
    ProjectionResult,
    feasible,
    fixed_marginal,
    moment_equality,
    moment_inequality,
    pava,
    project,
    stochastic_order_marginal,
)
from .engine import (
    CycleRecord,
    EngineOptions,
    Problem,
    Report,
    StepRecord,
    adjust,
    error_bound,
    run,
)
from .errors import (
    ConventionViolationError,
    DomainError,
    EngineStepError,
    GridMismatchError,
    InfeasibleDirectionError,
    InputError,
    IntegralOverflowError,
    IprojError,
    OracleFailureError,
    ProjectionUndefinedError,
)
from .measure import (
    DensityVector,
    DiscreteMeasure,
    GridSpec,
    axis_marginal,
    from_density_values,
    integrate,
    kl_divergence,
    lift_axis_values,
    log_partition,
    normalize,
    tv_distance,
    uniform_measure,
)

__version__ = "0.1.0"

__all__ = [
    "Constraint",
    "ConventionViolationError",
    "CycleRecord",
    "DensityVector",
    "DiscreteMeasure",
    "DomainError",
    "DualIncrement",
    "EngineOptions",
    "EngineStepError",
    "GridMismatchError",
    "GridSpec",
    "InfeasibleDirectionError",
    "InputError",
    "IntegralOverflowError",
    "IprojError",
    "OracleFailureError",
    "Problem",
    "ProjectionResult",
    "ProjectionUndefinedError",
    "Report",
    "StepRecord",
    "adjust",
    "axis_marginal",
    "error_bound",
    "feasible",
    "fixed_marginal",
    "from_density_values",
    "integrate",
    "kl_divergence",
    "lift_axis_values",
    "log_partition",
    "moment_equality",
    "moment_inequality",
    "normalize",
    "pava",
    "project",
    "run",
    "stochastic_order_marginal",
    "tv_distance",
    "uniform_measure",
]

"""Convex constraint sets and their single-set divergence projections.

Four kinds are supported:

* ``moment_inequality``: integral of z against p >= 0 (z already centered).
* ``moment_equality``: integral of z against p = 0.
* ``fixed_marginal``: the marginal of p along one axis equals a target
  probability measure G.
* ``stochastic_order_marginal``: the marginal of p along one axis is
  stochastically >= G, i.e. its prefix CDF never exceeds G's.  Prefix
  CDFs are taken left-closed on the grid nodes (node j contributes to
  the prefix at j).  Only the '>=' direction is implemented.

``project`` returns the projected probability measure together with the
dual increment y that generates it and the divergence paid for the step,
computed as minus the log-partition of y under the input measure.  That
quantity equals the divergence of the output relative to the input (to
1e-9), which tests assert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dual_solve import TiltProblem, tilt_solve
from .errors import DomainError, GridMismatchError, InputError, ProjectionUndefinedError
from .measure import (
    DensityVector,
    DiscreteMeasure,
    GridSpec,
    axis_marginal,
    lift_axis_values,
    normalize,
)

MOMENT_INEQUALITY = "moment_inequality"
MOMENT_EQUALITY = "moment_equality"
FIXED_MARGINAL = "fixed_marginal"
STOCHASTIC_ORDER_MARGINAL = "stochastic_order_marginal"

KINDS = (
    MOMENT_INEQUALITY,
    MOMENT_EQUALITY,
    FIXED_MARGINAL,
    STOCHASTIC_ORDER_MARGINAL,
)

_MOMENT_KINDS = (MOMENT_INEQUALITY, MOMENT_EQUALITY)
_MARGINAL_KINDS = (FIXED_MARGINAL, STOCHASTIC_ORDER_MARGINAL)

# A dual increment's defining identities are enforced to this tolerance.
DUAL_CENTER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Constraint:
    """One convex constraint set.

    Moment kinds carry the centered statistic ``z``; marginal kinds carry
    the axis name and the target marginal ``target`` (a 1-d probability
    measure on that axis' grid).
    """

    kind: str
    z: DensityVector | None = None
    axis: str | None = None
    target: DiscreteMeasure | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown constraint kind {self.kind!r}")
        if self.kind in _MOMENT_KINDS:
            if self.z is None or self.axis is not None or self.target is not None:
                raise InputError(f"{self.kind} takes exactly a statistic z")
        else:
            if self.z is not None or self.axis is None or self.target is None:
                raise InputError(f"{self.kind} takes exactly an axis and a target")
            if self.target.grid.dim != 1:
                raise GridMismatchError("marginal target must live on a 1-d grid")
            if not self.target.is_probability():
                raise InputError(
                    f"marginal target must be a probability measure,"
                    f" mass = {self.target.total_mass!r}"
                )

    def grid_of_z(self) -> GridSpec | None:
        return None if self.z is None else self.z.grid


def moment_inequality(z: DensityVector) -> Constraint:
    return Constraint(kind=MOMENT_INEQUALITY, z=z)


def moment_equality(z: DensityVector) -> Constraint:
    return Constraint(kind=MOMENT_EQUALITY, z=z)


def fixed_marginal(axis: str, target: DiscreteMeasure) -> Constraint:
    return Constraint(kind=FIXED_MARGINAL, axis=axis, target=target)


def stochastic_order_marginal(axis: str, target: DiscreteMeasure) -> Constraint:
    return Constraint(kind=STOCHASTIC_ORDER_MARGINAL, axis=axis, target=target)


@dataclass(frozen=True, eq=False)
class DualIncrement:
    """The dual variable attached to one projection step.

    Moment kinds: y = alpha * z with alpha >= 0 for inequalities.
    Marginal kinds: a per-axis-node vector, recentered so its integral
    against the target vanishes; for stochastic order it is nondecreasing
    along the axis.
    """

    kind: str
    alpha: float | None = None
    z: DensityVector | None = None
    axis: str | None = None
    axis_values: np.ndarray | None = None

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        """The dual as a flat node vector on ``grid``."""
        if self.kind in _MOMENT_KINDS:
            if self.z.grid != grid:
                raise GridMismatchError("dual increment lives on a different grid")
            if self.alpha == 0.0:
                return np.zeros(grid.n_nodes)
            return self.alpha * self.z.values
        return lift_axis_values(grid, self.axis, self.axis_values)


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    measure: DiscreteMeasure
    dual: DualIncrement
    divergence: float


def _check_marginal_compat(c: Constraint, m: DiscreteMeasure) -> None:
    if c.target.grid != m.grid.axis_grid(c.axis):
        raise GridMismatchError("marginal target grid does not match the measure's axis")


def feasible(c: Constraint, p: DiscreteMeasure, tol: float) -> tuple[bool, float]:
    """Whether p satisfies the constraint to within tol, plus the violation.

    Violations: max(0, -integral z dp) for inequalities, |integral z dp|
    for equalities, total variation against the target for fixed
    marginals, and the largest clamped prefix-CDF excess for stochastic
    order.
    """
    if not tol >= 0:
        raise InputError("tolerance must be nonnegative")
    if c.kind in _MOMENT_KINDS:
        if c.z.grid != p.grid:
            raise GridMismatchError("statistic lives on a different grid")
        mean = kernels.weighted_sum(c.z.values, p.weights)
        violation = abs(mean) if c.kind == MOMENT_EQUALITY else max(0.0, -mean)
    else:
        _check_marginal_compat(c, p)
        marg = axis_marginal(p, c.axis)
        if c.kind == FIXED_MARGINAL:
            violation = kernels.abs_diff_sum(marg.weights, c.target.weights)
        else:
            excess = np.cumsum(marg.weights) - np.cumsum(c.target.weights)
            violation = max(0.0, float(excess.max()))
    return violation <= tol, violation


def pava(values, weights) -> np.ndarray:
    """Weighted isotonic regression (nondecreasing), strict-violation pooling.

    Equal adjacent block means are left alone; the output preserves the
    weighted mean of the input up to rounding.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if v.ndim != 1 or v.shape != w.shape:
        raise InputError("values and weights must be 1-d arrays of equal length")
    if v.size == 0:
        raise InputError("pava needs at least one value")
    if not (w > 0).all():
        raise InputError("pava weights must be strictly positive")
    if not np.isfinite(v).all():
        raise InputError("pava values must be finite")
    return kernels.pava(v, w)


def project(c: Constraint, s: DiscreteMeasure) -> ProjectionResult:
    """Divergence projection of s (normalized) onto the constraint set.

    s may carry any positive total mass; the projection itself is a
    probability measure.  The reported divergence is the raw value
    relative to s as given, which is negative when s has mass below one
    and the constraint is inactive.
    """
    if s.total_mass <= 0.0:
        raise DomainError("cannot project a measure without positive mass")
    if c.kind in _MOMENT_KINDS:
        return _project_moment(c, s)
    if c.kind == FIXED_MARGINAL:
        return _project_fixed_marginal(c, s)
    return _project_stochastic_order(c, s)


def _project_moment(c: Constraint, s: DiscreteMeasure) -> ProjectionResult:
    if c.z.grid != s.grid:
        raise GridMismatchError("statistic lives on a different grid")
    mass = s.total_mass
    _, mean0, _ = kernels.tilted_moments(c.z.values, s.weights, 0.0)
    inactive = mean0 >= 0.0 if c.kind == MOMENT_INEQUALITY else mean0 == 0.0
    if inactive:
        alpha, log_norm = 0.0, math.log(mass)
        p = DiscreteMeasure(s.grid, s.weights / mass)
    else:
        sign = "nonnegative" if c.kind == MOMENT_INEQUALITY else "free"
        alpha, log_norm = tilt_solve(TiltProblem(s=s, z=c.z, sign=sign))
        w = np.zeros(s.grid.n_nodes)
        support = s.weights > 0
        w[support] = np.exp(alpha * c.z.values[support] - log_norm) * s.weights[support]
        p = DiscreteMeasure(s.grid, w)
    dual = DualIncrement(kind=c.kind, alpha=alpha, z=c.z)
    return ProjectionResult(measure=p, dual=dual, divergence=-log_norm)


def _marginal_ratio(c: Constraint, m: DiscreteMeasure) -> np.ndarray:
    """Target over current marginal, with 0/0 = 0 and mass/0 an error."""
    marg = axis_marginal(m, c.axis).weights
    tgt = c.target.weights
    dead = marg == 0.0
    if (dead & (tgt > 0.0)).any():
        raise ProjectionUndefinedError(
            "target marginal charges a node where the measure's marginal vanishes"
        )
    out = np.zeros_like(tgt)
    np.divide(tgt, marg, out=out, where=~dead)
    return out


def _centered_log(c: Constraint, axis_values: np.ndarray) -> np.ndarray:
    """ln of a per-axis vector (-inf at zeros), recentered against the target."""
    y = np.full(axis_values.shape, -math.inf)
    np.log(axis_values, out=y, where=axis_values > 0.0)
    center = kernels.weighted_sum(y, c.target.weights)
    return y - center


def _project_fixed_marginal(c: Constraint, s: DiscreteMeasure) -> ProjectionResult:
    _check_marginal_compat(c, s)
    ratio = _marginal_ratio(c, s)
    w = s.weights * lift_axis_values(s.grid, c.axis, ratio)
    p = DiscreteMeasure(s.grid, w)
    y_axis = _centered_log(c, ratio)
    dual = DualIncrement(kind=c.kind, axis=c.axis, axis_values=y_axis)
    div = -kernels.logsumexp_weighted(dual.on_grid(s.grid), s.weights)
    return ProjectionResult(measure=p, dual=dual, divergence=div)


def _project_stochastic_order(c: Constraint, s: DiscreteMeasure) -> ProjectionResult:
    _check_marginal_compat(c, s)
    s_norm, _ = normalize(s)
    marg = axis_marginal(s_norm, c.axis).weights
    ratio = _marginal_ratio(c, s_norm)
    support = marg > 0.0
    a = np.zeros_like(ratio)
    a[support] = kernels.pava(ratio[support], marg[support])
    if not support.all():
        # carry block values over zero-mass axis nodes to keep the vector
        # nondecreasing; those nodes never receive mass
        idx = np.flatnonzero(support)
        fill = np.clip(np.searchsorted(idx, np.arange(a.size), side="right") - 1, 0, None)
        a = a[idx[fill]]
    w = s_norm.weights * lift_axis_values(s.grid, c.axis, a)
    p = DiscreteMeasure(s.grid, w)
    y_axis = _centered_log(c, a)
    dual = DualIncrement(kind=c.kind, axis=c.axis, axis_values=y_axis)
    div = -kernels.logsumexp_weighted(dual.on_grid(s.grid), s.weights)
    return ProjectionResult(measure=p, dual=dual, divergence=div)

"""Discrete measures on midpoint grids, with the divergence primitives.

A grid covers a 1- or 2-dimensional open box with equal cells; nodes sit
at cell midpoints so densities like ln(x) are always evaluated away from
the boundary.  A measure stores one nonnegative weight per node (density
times quadrature weight).  All reductions go through the kernel backend:
Kahan-compensated, fixed ascending node order, serial.  That fixed order
is the determinism contract; results are reproducible across runs and
across the compiled/pure backends bit for bit.

Extended-real conventions used throughout: ln 0 = -inf, ln(a/0) = +inf
for a > 0, and 0*(+-inf) = 0 inside integrals.  NaN is always a bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, GridMismatchError, InputError, IntegralOverflowError

# Tolerance for accepting user-facing probability-measure input.
PM_INPUT_TOL = 1e-9
# Tolerance normalize() itself is held to.
PM_INTERNAL_TOL = 1e-12

_AXIS_INDEX = {"x": 0, "y": 1}


@dataclass(frozen=True)
class GridSpec:
    """Equal-cell midpoint grid on an open box in 1 or 2 dimensions.

    Parameters
    ----------
    shape : tuple of int
        Nodes per axis, one or two entries.
    domain : tuple of (float, float)
        Open interval per axis, lower bound strictly below upper.

    Nodes of a 2-d grid are flattened x-fastest: node k corresponds to
    (ix, iy) = (k % nx, k // nx).  Every node carries the same quadrature
    weight, cell volume = box volume / number of nodes, so the weights
    are positive and sum to the box volume exactly.
    """

    shape: tuple[int, ...]
    domain: tuple[tuple[float, float], ...]
    node_rule: str = "midpoint"

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "domain", domain)
        if len(shape) not in (1, 2):
            raise InputError("grid dimension must be 1 or 2")
        if len(domain) != len(shape):
            raise InputError("domain and shape lengths differ")
        if any(n < 1 for n in shape):
            raise InputError("each axis needs at least one node")
        for lo, hi in domain:
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise InputError("each domain interval needs finite lo < hi")
        if self.node_rule != "midpoint":
            raise InputError("only the midpoint node rule is supported")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_nodes(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for (lo, hi), n in zip(self.domain, self.shape):
            vol *= (hi - lo) / n
        return vol

    def axis_nodes(self, axis: str) -> np.ndarray:
        """Midpoint coordinates along one axis."""
        a = self.axis_index(axis)
        lo, hi = self.domain[a]
        n = self.shape[a]
        h = (hi - lo) / n
        return lo + (np.arange(n, dtype=np.float64) + 0.5) * h

    def axis_index(self, axis: str) -> int:
        try:
            a = _AXIS_INDEX[axis]
        except KeyError:
            raise InputError(f"axis must be 'x' or 'y', got {axis!r}") from None
        if a >= self.dim:
            raise InputError(f"axis {axis!r} does not exist on a {self.dim}-d grid")
        return a

    def axis_grid(self, axis: str) -> GridSpec:
        """The 1-d grid carried by one axis."""
        a = self.axis_index(axis)
        return GridSpec(shape=(self.shape[a],), domain=(self.domain[a],))

    def node_columns(self) -> tuple[np.ndarray, ...]:
        """Per-node coordinate arrays in flat node order."""
        if self.dim == 1:
            return (self.axis_nodes("x"),)
        x = self.axis_nodes("x")
        y = self.axis_nodes("y")
        return (np.tile(x, self.shape[1]), np.repeat(y, self.shape[0]))

    def quad_weights(self) -> np.ndarray:
        return np.full(self.n_nodes, self.cell_volume, dtype=np.float64)


def _check_values(grid: GridSpec, values, *, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.shape != (grid.n_nodes,):
        raise InputError(
            f"{what} must be a flat vector of length {grid.n_nodes}, got shape {arr.shape}"
        )
    if np.isnan(arr).any():
        raise InputError(f"{what} contains NaN")
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative finite measure: one weight (node mass) per grid node.

    Weights must be finite and >= 0; the array is copied and frozen.
    ``total_mass`` is the compensated sum of the weights, cached once.
    """

    grid: GridSpec
    weights: np.ndarray

    def __post_init__(self):
        w = _check_values(self.grid, self.weights, what="weights").copy()
        if np.isinf(w).any():
            raise InputError("weights must be finite")
        if (w < 0).any():
            raise InputError("weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_total_mass", kernels.kahan_sum(w))

    @property
    def total_mass(self) -> float:
        return self._total_mass

    def is_probability(self, tol: float = PM_INPUT_TOL) -> bool:
        return abs(self.total_mass - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class DensityVector:
    """Extended-real node function (a Radon-Nikodym derivative or a dual
    variable).  +-inf entries are legal and explicit; NaN is rejected.

    When the values stand for an actual density the caller's contract is
    values >= 0, with 0 exactly where the base carries mass but the
    numerator does not; dual variables are free-signed.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _check_values(self.grid, self.values, what="values").copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError("operands live on different grids")


def uniform_measure(grid: GridSpec) -> DiscreteMeasure:
    """The uniform probability measure on the grid's box."""
    vol = grid.cell_volume * grid.n_nodes
    return DiscreteMeasure(grid, np.full(grid.n_nodes, grid.cell_volume / vol))


def from_density_values(grid: GridSpec, values) -> DiscreteMeasure:
    """Measure with node masses density(node) * quadrature weight."""
    v = _check_values(grid, values, what="density values")
    return DiscreteMeasure(grid, v * grid.cell_volume)


def kl_divergence(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    """I-divergence sum of p_k ln(p_k/q_k) of a probability measure p
    relative to a (possibly unnormalized) measure q.

    Returns +inf exactly when p charges a node where q vanishes.  p must
    be normalized to within ``PM_INPUT_TOL``; q need not be, in which
    case the value can legitimately be negative.
    """
    _same_grid(p, q)
    if not p.is_probability():
        raise InputError(
            f"first argument must be a probability measure, mass = {p.total_mass!r}"
        )
    return kernels.kl_sum(p.weights, q.weights)


def integrate(f: DensityVector, m: DiscreteMeasure) -> float:
    """Integral of f against m under the convention 0 * (+-inf) = 0.

    Fixed-order compensated summation; deterministic across runs.  A +inf
    value of f on a node of positive mass raises IntegralOverflowError.
    """
    _same_grid(f, m)
    try:
        return kernels.weighted_sum(f.values, m.weights)
    except OverflowError as e:
        raise IntegralOverflowError(str(e)) from e


def log_partition(y: DensityVector, m: DiscreteMeasure) -> float:
    """ln of the integral of e^y against m, computed max-shifted.

    The shift is the maximum of y over nodes of positive mass, so e^y
    never overflows for y <= 700 + shift.  y = -inf contributes zero.
    """
    _same_grid(y, m)
    if m.total_mass <= 0.0:
        raise DomainError("log_partition needs a measure with positive mass")
    try:
        return kernels.logsumexp_weighted(y.values, m.weights)
    except OverflowError as e:
        raise IntegralOverflowError(str(e)) from e


def normalize(m: DiscreteMeasure) -> tuple[DiscreteMeasure, float]:
    """Scale m to a probability measure; returns (normalized, old mass)."""
    mass = m.total_mass
    if mass <= 0.0:
        raise DomainError("cannot normalize a measure without positive mass")
    return DiscreteMeasure(m.grid, m.weights / mass), mass


def tv_distance(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    """Total variation as the sum of absolute weight differences."""
    _same_grid(p, q)
    return kernels.abs_diff_sum(p.weights, q.weights)


def axis_marginal(m: DiscreteMeasure, axis: str) -> DiscreteMeasure:
    """Marginal of a measure along one axis, as a 1-d measure.

    Each marginal weight is the compensated sum over the other axis in
    ascending index order, preserving the determinism contract.
    """
    a = m.grid.axis_index(axis)
    if m.grid.dim == 1:
        return DiscreteMeasure(m.grid, m.weights)
    nx, ny = m.grid.shape
    w2 = m.weights.reshape(ny, nx)
    if a == 0:
        cols = np.ascontiguousarray(w2.T)
        out = np.array([kernels.kahan_sum(cols[i]) for i in range(nx)])
    else:
        out = np.array([kernels.kahan_sum(np.ascontiguousarray(w2[j])) for j in range(ny)])
    return DiscreteMeasure(m.grid.axis_grid(axis), out)


def lift_axis_values(grid: GridSpec, axis: str, values: np.ndarray) -> np.ndarray:
    """Expand a per-axis-node vector to a flat per-grid-node vector."""
    a = grid.axis_index(axis)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (grid.shape[a],):
        raise GridMismatchError("axis vector length does not match the grid axis")
    if grid.dim == 1:
        return values.copy()
    nx, ny = grid.shape
    return np.tile(values, ny) if a == 0 else np.repeat(values, nx)

"""One-dimensional exponential tilting.

Solves min over alpha of phi(alpha) = ln integral e^{alpha z} ds, either
over alpha >= 0 (inequality constraints) or over all of R (equalities).
phi is convex with phi' the tilted mean of z and phi'' the tilted
variance, so the minimizer is the root of the tilted-mean equation,
found by doubling to a bracket and safeguarded Newton inside it.

z is used exactly as given; no recentering happens here.  Callers center
their statistic (z = g - c) before building the problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, InfeasibleDirectionError, InputError
from .measure import DensityVector, DiscreteMeasure, _same_grid

_MAX_NEWTON_ITERS = 200
_BRACKET_WIDTH_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class TiltProblem:
    """A single tilt solve: measure, statistic, sign constraint and caps.

    ``sign`` is 'nonnegative' for inequality duals and 'free' for
    equality duals.  The solve fails with an infeasible-direction error
    if the bracket would pass ``alpha_cap``.
    """

    s: DiscreteMeasure
    z: DensityVector
    sign: str = "nonnegative"
    alpha_cap: float = 1e3
    tol_grad: float = 1e-12

    def __post_init__(self):
        _same_grid(self.s, self.z)
        if self.sign not in ("nonnegative", "free"):
            raise InputError(f"sign must be 'nonnegative' or 'free', got {self.sign!r}")
        if not self.alpha_cap > 0:
            raise InputError("alpha_cap must be positive")
        if not self.tol_grad > 0:
            raise InputError("tol_grad must be positive")
        if self.s.total_mass <= 0:
            raise DomainError("tilt needs a measure with positive mass")
        support = self.s.weights > 0
        if not np.isfinite(self.z.values[support]).all():
            raise InputError("statistic must be finite wherever the measure has mass")


def tilt_solve(tp: TiltProblem) -> tuple[float, float]:
    """Solve the tilt problem; returns (alpha, log-partition at alpha).

    Termination: |phi'(alpha)| <= tol_grad * (1 + max|z|) or the Newton
    bracket shrinks to 1e-14 (or to adjacent floats).
    """
    zv = tp.z.values
    w = tp.s.weights
    zs = zv[w > 0]
    zmin = float(zs.min())
    zmax = float(zs.max())
    tol = tp.tol_grad * (1.0 + max(abs(zmin), abs(zmax)))

    def moments(alpha: float) -> tuple[float, float, float]:
        return kernels.tilted_moments(zv, w, alpha)

    if zmin == zmax:
        # constant statistic: the tilt cannot move the mean
        feasible = zmin >= 0.0 if tp.sign == "nonnegative" else zmin == 0.0
        if not feasible:
            raise InfeasibleDirectionError(
                f"statistic is constant at {zmin}, no tilt can reach the constraint"
            )
        phi0, _, _ = moments(0.0)
        return 0.0, phi0

    phi0, d0, _ = moments(0.0)
    if tp.sign == "nonnegative":
        if d0 >= 0.0:
            return 0.0, phi0
        direction = 1.0
    else:
        if d0 == 0.0:
            return 0.0, phi0
        direction = 1.0 if d0 < 0.0 else -1.0

    # phi' is nondecreasing in alpha; hunt for a sign change by doubling.
    # left always carries phi' < 0, right carries phi' >= 0.
    if direction > 0:
        left, right = 0.0, None
        a = 1.0
    else:
        left, right = None, 0.0
        a = -1.0
    while True:
        if abs(a) > tp.alpha_cap:
            a = math.copysign(tp.alpha_cap, a)
        phi_a, d_a, dd_a = moments(a)
        if abs(d_a) <= tol:
            return a, phi_a
        if direction > 0:
            if d_a > 0.0:
                right = a
                break
            left = a
        else:
            if d_a < 0.0:
                left = a
                break
            right = a
        if abs(a) >= tp.alpha_cap:
            raise InfeasibleDirectionError(
                f"tilted-mean equation has no root with |alpha| <= {tp.alpha_cap}"
                f" (gradient {d_a:.3e} at the cap)"
            )
        a *= 2.0

    # safeguarded Newton inside [left, right]
    x, dx, ddx = a, d_a, dd_a
    phi_x = phi_a
    for _ in range(_MAX_NEWTON_ITERS):
        if ddx > 0.0:
            step = x - dx / ddx
        else:
            step = math.nan
        if not (left < step < right):
            step = 0.5 * (left + right)
        phi_x, dx, ddx = moments(step)
        x = step
        if abs(dx) <= tol:
            return x, phi_x
        if dx < 0.0:
            left = x
        else:
            right = x
        width = right - left
        if width <= _BRACKET_WIDTH_FLOOR or width <= abs(x) * 4e-16:
            return x, phi_x
    return x, phi_x

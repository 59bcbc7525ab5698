"""Cyclic divergence projection onto an intersection of convex sets.

Corrected mode implements the adjusted iteration: before re-projecting
onto constraint i, the previous cycle's projection effect on that
constraint is divided out,

    dS(n,i)/dQ = dP(n,i-1)/dQ * (dP(n-1,i)/dS(n-1,i))^(-1),

so S(n,i) is generally not a probability measure.  Its projection onto
the i-th set is P(n,i), and the dual increment of the step *replaces*
the stored dual for that constraint.  Naive mode skips the adjustment
(S = previous iterate) and *accumulates* duals; it agrees with corrected
mode on linear sets but converges to the wrong point on curved ones.

Bookkeeping per step: the raw signed divergence paid, the dual-sum
identity, an orthogonality residual, and a total-variation/divergence
pair for the Pinsker check.  In corrected mode the adjusted measure
always equals a scalar times the exponential family member e^R Q, where
R sums the stored duals of the *other* constraints; scalars never affect
a projection, so the reported mass_S and b_integral diagnostics (and the
boundedness monitors built from them) are those of the scale-free
representative e^R Q, while the divergence ledger keeps the raw values
that make the per-cycle dual-sum identity exact.  The scalar itself,
c(n,i), is tracked in the log domain by a running product of step
normalizers and cross-checked each step against the directly measured
ratio of masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constraints import Constraint, DualIncrement, feasible, project
from .errors import (
    ConventionViolationError,
    EngineStepError,
    GridMismatchError,
    InputError,
    IprojError,
)
from .measure import DensityVector, DiscreteMeasure, kl_divergence

# Steps whose adjusted measure keeps less than this much mass get flagged:
# the divergence bookkeeping stays valid but the run deserves scrutiny.
LOW_MASS_FLAG = 0.5

TERMINATED_CONVERGED = "converged"
TERMINATED_MAX_CYCLES = "max_cycles"
TERMINATED_CAP_ABORT = "cap_abort"


@dataclass(frozen=True, eq=False)
class Problem:
    """Base probability measure plus the constraint sets, in cycle order."""

    base: DiscreteMeasure
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.base.is_probability():
            raise InputError(
                f"base must be a probability measure, mass = {self.base.total_mass!r}"
            )
        for c in self.constraints:
            zgrid = c.grid_of_z()
            if zgrid is not None and zgrid != self.base.grid:
                raise GridMismatchError("constraint statistic grid differs from the base")
            if c.axis is not None and c.target.grid != self.base.grid.axis_grid(c.axis):
                raise GridMismatchError("constraint target grid differs from the base axis")


@dataclass(frozen=True)
class EngineOptions:
    mode: str = "corrected"
    max_cycles: int = 100
    tol_tv: float = 1e-9
    tol_feas: float = 1e-8
    m1_cap: float = 1e6
    m2_cap: float = 1e6
    on_cap: str = "warn"
    keep_iterates: bool = False

    def __post_init__(self):
        if self.mode not in ("corrected", "naive"):
            raise InputError(f"mode must be 'corrected' or 'naive', got {self.mode!r}")
        if self.max_cycles < 1:
            raise InputError("max_cycles must be at least 1")
        if not (self.tol_tv > 0 and self.tol_feas > 0):
            raise InputError("tolerances must be positive")
        if not (self.m1_cap > 0 and self.m2_cap > 0):
            raise InputError("monitor caps must be positive")
        if self.on_cap not in ("warn", "abort"):
            raise InputError(f"on_cap must be 'warn' or 'abort', got {self.on_cap!r}")


@dataclass
class EngineState:
    """Mutable state of a run: position, iterate, corrections and duals.

    ``corrections`` holds dP(n-1,i)/dS(n-1,i) per constraint (all ones
    before the first cycle); ``y_grids`` the stored dual of each
    constraint expanded to grid nodes; ``duals`` the latest structured
    increments; ``lnc`` the log-domain scalars tying each S(n,i) to the
    scale-free family member e^R Q, maintained by the running product of
    step normalizers; ``ln_a`` the current log-partition of the summed
    duals under the base and ``ln_a_after`` its value right after each
    constraint's own latest step (the recursion needs both).
    """

    problem: Problem
    cycle: int
    index: int
    current: DiscreteMeasure
    corrections: list[np.ndarray]
    y_grids: list[np.ndarray]
    duals: list[DualIncrement | None]
    lnc: list[float]
    ln_a: float
    ln_a_after: list[float]
    cycle_divergences: list[float] = field(default_factory=list)

    @property
    def density(self) -> DensityVector:
        """dP/dQ of the current iterate (0/0 read as 0)."""
        q = self.problem.base.weights
        out = np.zeros_like(q)
        np.divide(self.current.weights, q, out=out, where=q > 0)
        return DensityVector(self.problem.base.grid, out)


@dataclass
class StepRecord:
    cycle: int
    index: int
    divergence: float
    mass_s: float
    b_integral: float
    orthogonality: float
    tv_step: float
    kl_step: float
    lnc: float | None
    lnc_residual: float | None
    low_mass: bool


@dataclass
class CycleRecord:
    cycle: int
    dual_total: float
    identity_residual: float
    tv_change: float
    feasible: bool
    max_violation: float


@dataclass
class Report:
    """Everything a run recorded; rows are in execution order.

    ``dual_grids`` holds the final stored dual of each constraint as a
    flat node vector (the accumulated one in naive mode), so the limit
    can be reconstructed as an exponential tilt of the base.
    """

    mode: str
    steps: list[StepRecord]
    cycles: list[CycleRecord]
    m1: float
    m2: float
    termination: str
    breaches: list[str]
    problem: Problem
    options: EngineOptions
    dual_grids: list[np.ndarray] = field(default_factory=list)
    iterates: list[DiscreteMeasure] | None = None

    @property
    def low_mass_steps(self) -> list[tuple[int, int]]:
        return [(r.cycle, r.index) for r in self.steps if r.low_mass]

    def cycle_steps(self, cycle: int) -> list[StepRecord]:
        return [r for r in self.steps if r.cycle == cycle]


def adjust(p_prev: DiscreteMeasure, correction: DensityVector) -> DiscreteMeasure:
    """Divide the previous iterate by a correction density, 0/0 = 0.

    A vanishing correction under positive mass violates the convention
    (mass appeared where the last cycle's projection removed all of it)
    and raises; zeros elsewhere propagate silently.
    """
    if p_prev.grid != correction.grid:
        raise GridMismatchError("correction lives on a different grid")
    f = correction.values
    w = p_prev.weights
    if ((f == 0.0) & (w > 0.0)).any():
        raise ConventionViolationError(
            "correction vanishes on a set where the iterate keeps mass"
        )
    out = np.zeros_like(w)
    np.divide(w, f, out=out, where=f > 0.0)
    return DiscreteMeasure(p_prev.grid, out)


def dual_total(state: EngineState, q: DiscreteMeasure) -> tuple[float, float]:
    """Minus the log-partition of the summed duals under q, and the
    residual against the divergences recorded over the current cycle."""
    total = state.y_grids[0].copy()
    for y in state.y_grids[1:]:
        total = total + y
    value = -kernels.logsumexp_weighted(total, q.weights)
    residual = abs(math.fsum(state.cycle_divergences) - value)
    return value, residual


def _ratio_or_zero(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0.0)
    return out


def _log_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """ln(num/den) with -inf where num = 0 and 0 where den = 0.

    Nodes where den = 0 never carry mass downstream, so the placeholder
    value is never integrated.
    """
    out = np.full(num.shape, -math.inf)
    live = (num > 0.0) & (den > 0.0)
    np.log(np.divide(num, den, out=np.ones_like(num), where=live), out=out, where=live)
    out[den == 0.0] = 0.0
    return out


def _sum_except(arrays: list[np.ndarray], skip: int) -> np.ndarray:
    out: np.ndarray | None = None
    for j, a in enumerate(arrays):
        if j == skip:
            continue
        out = a.copy() if out is None else out + a
    return out if out is not None else np.zeros_like(arrays[skip])


def run(problem: Problem, options: EngineOptions | None = None) -> tuple[DiscreteMeasure, Report]:
    """Run the cyclic projection until convergence or a budget stop.

    Convergence means: total-variation change of the cycle-end iterate
    at most tol_tv *and* every constraint feasible at tol_feas.  The
    returned measure is the last cycle-end iterate.
    """
    options = options or EngineOptions()
    q = problem.base
    t = len(problem.constraints)
    grid = q.grid
    n_nodes = grid.n_nodes

    state = EngineState(
        problem=problem,
        cycle=0,
        index=0,
        current=q,
        corrections=[np.ones(n_nodes) for _ in range(t)],
        y_grids=[np.zeros(n_nodes) for _ in range(t)],
        duals=[None] * t,
        lnc=[0.0] * t,
        ln_a=0.0,
        ln_a_after=[0.0] * t,
    )
    steps: list[StepRecord] = []
    cycles: list[CycleRecord] = []
    breaches: list[str] = []
    iterates: list[DiscreteMeasure] | None = [] if options.keep_iterates else None
    m1 = -math.inf
    m2 = -math.inf
    termination = TERMINATED_MAX_CYCLES

    if t == 0:
        report = Report(
            mode=options.mode, steps=[], cycles=[], m1=m1, m2=m2,
            termination=TERMINATED_CONVERGED, breaches=[], problem=problem,
            options=options, dual_grids=[], iterates=iterates,
        )
        return q, report

    corrected = options.mode == "corrected"
    p_cycle_prev = q
    aborted = False

    for n in range(1, options.max_cycles + 1):
        state.cycle = n
        state.cycle_divergences = []
        for i in range(t):
            state.index = i + 1
            c = problem.constraints[i]
            try:
                if corrected:
                    s = adjust(state.current, DensityVector(grid, state.corrections[i]))
                    # Diagnostics use the scale-free representative of S:
                    # the working S equals c * exp(r_other) * Q for a
                    # scalar c that cancels out of the projection, so
                    # report the c = 1 member.
                    r_other = _sum_except(state.y_grids, i)
                    ln_mass_free = kernels.logsumexp_weighted(r_other, q.weights)
                    mass_s = math.exp(ln_mass_free) if ln_mass_free < 709.0 else math.inf
                    lnc = state.lnc[i] + state.ln_a_after[i] - state.ln_a
                    mass_raw = s.total_mass
                    lnc_measured = (
                        math.log(mass_raw) - ln_mass_free if mass_raw > 0 else -math.inf
                    )
                    lnc_residual = abs(lnc - lnc_measured)
                else:
                    s = state.current
                    mass_s = s.total_mass
                    lnc = None
                    lnc_residual = None

                result = project(c, s)
                p_new = result.measure

                if corrected:
                    b = kernels.weighted_sum(r_other, p_new.weights)
                else:
                    b_vals = _log_ratio(s.weights, q.weights)
                    b = kernels.weighted_sum(b_vals, p_new.weights)
                orth = abs(kernels.weighted_sum(result.dual.on_grid(grid), p_new.weights))
                tv_step = kernels.abs_diff_sum(p_new.weights, state.current.weights)
                kl_step = kl_divergence(p_new, state.current)
            except IprojError as e:
                raise EngineStepError(n, i + 1, str(e)) from e
            except OverflowError as e:
                raise EngineStepError(n, i + 1, f"step bookkeeping overflowed: {e}") from e

            if corrected:
                state.corrections[i] = _ratio_or_zero(p_new.weights, s.weights)
                state.y_grids[i] = result.dual.on_grid(grid)
                state.duals[i] = result.dual
            else:
                state.y_grids[i] = state.y_grids[i] + result.dual.on_grid(grid)
                state.duals[i] = result.dual
            ln_a_new = kernels.logsumexp_weighted(sum(state.y_grids), q.weights)
            if corrected:
                state.lnc[i] = lnc
                state.ln_a_after[i] = ln_a_new
            state.ln_a = ln_a_new
            state.current = p_new
            state.cycle_divergences.append(result.divergence)

            m1 = max(m1, mass_s)
            m2 = max(m2, b)
            low_mass = mass_s < LOW_MASS_FLAG
            steps.append(StepRecord(
                cycle=n, index=i + 1, divergence=result.divergence, mass_s=mass_s,
                b_integral=b, orthogonality=orth, tv_step=tv_step, kl_step=kl_step,
                lnc=lnc, lnc_residual=lnc_residual, low_mass=low_mass,
            ))
            if iterates is not None:
                iterates.append(p_new)

            cap_msgs = []
            if mass_s > options.m1_cap:
                cap_msgs.append(f"mass monitor breached at ({n},{i + 1}): {mass_s:.6g}")
            if b > options.m2_cap:
                cap_msgs.append(f"b-integral monitor breached at ({n},{i + 1}): {b:.6g}")
            if cap_msgs:
                breaches.extend(cap_msgs)
                if options.on_cap == "abort":
                    aborted = True
                    break
        if aborted:
            termination = TERMINATED_CAP_ABORT
            break

        value, residual = dual_total(state, q)
        tv_change = kernels.abs_diff_sum(state.current.weights, p_cycle_prev.weights)
        p_cycle_prev = state.current
        feas_results = [feasible(c, state.current, options.tol_feas) for c in problem.constraints]
        all_ok = all(ok for ok, _ in feas_results)
        max_violation = max(v for _, v in feas_results)
        cycles.append(CycleRecord(
            cycle=n, dual_total=value, identity_residual=residual,
            tv_change=tv_change, feasible=all_ok, max_violation=max_violation,
        ))
        if tv_change <= options.tol_tv and all_ok:
            termination = TERMINATED_CONVERGED
            break

    report = Report(
        mode=options.mode, steps=steps, cycles=cycles, m1=m1, m2=m2,
        termination=termination, breaches=breaches, problem=problem,
        options=options, dual_grids=[y.copy() for y in state.y_grids],
        iterates=iterates,
    )
    return state.current, report


def error_bound(p_hat: DiscreteMeasure, q: DiscreteMeasure, report: Report) -> float:
    """Divergence gap between a feasible candidate and the last cycle.

    Returns I(p_hat | q) minus the summed step divergences of the last
    completed cycle; by the Pythagorean inequality this bounds the
    divergence of the candidate from the limit point.  p_hat must be
    feasible for every constraint of the run (at the run's tol_feas).
    """
    if not report.cycles:
        raise InputError("report has no completed cycle to bound against")
    for idx, c in enumerate(report.problem.constraints):
        ok, violation = feasible(c, p_hat, report.options.tol_feas)
        if not ok:
            raise InputError(
                f"candidate violates constraint {idx + 1} by {violation:.3e};"
                " the bound needs a feasible point"
            )
    last = report.cycles[-1].cycle
    cycle_sum = math.fsum(r.divergence for r in report.cycle_steps(last))
    return kl_divergence(p_hat, q) - cycle_sum

"""Independent reference solver for small projection problems.

Deliberately shares nothing with the production path except the
divergence kernels of the measure layer: marginals, lifts, tilted means
and the dual search are all reimplemented here with plain vectorized
numpy, so agreement between the two paths is meaningful evidence.

Two routes:

* parametric (all-moment instances): grid-search over dual coefficients
  followed by cyclic coordinate bisection on the tilted-mean equations,
  i.e. direct minimization of the dual log-partition over the cone.
* fallback (any catalog kind): augmented-Lagrangian projected-gradient
  descent on the simplex with step halving, with every constraint
  expressed through finitely many linear functionals (marginal
  equalities per axis node, prefix-CDF inequalities per axis node).

Both routes end with the same KKT certificate; a residual above 1e-6
after both raises OracleFailureError rather than returning a guess.
Certificates check stationarity on the support of the candidate only,
which is the whole grid for the full-support instances this module is
meant for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .constraints import (
    FIXED_MARGINAL,
    MOMENT_EQUALITY,
    MOMENT_INEQUALITY,
    STOCHASTIC_ORDER_MARGINAL,
    Constraint,
)
from .errors import InputError, OracleFailureError
from .measure import DiscreteMeasure, GridSpec

MAX_NODES = 64
MAX_CONSTRAINTS = 3
KKT_ACCEPT = 1e-6
_GRID_CANDIDATES = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
_ALPHA_CAP = 1e4


@dataclass(frozen=True, eq=False)
class SmallInstance:
    """A projection problem small enough to brute-force.

    The base must have full support; at most 64 nodes and 3 constraints.
    """

    q: DiscreteMeasure
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.q.grid.n_nodes > MAX_NODES:
            raise InputError(f"instance exceeds {MAX_NODES} nodes")
        if len(self.constraints) > MAX_CONSTRAINTS:
            raise InputError(f"instance exceeds {MAX_CONSTRAINTS} constraints")
        if not (self.q.weights > 0).all():
            raise InputError("instance base must have full support")
        if not self.q.is_probability():
            raise InputError("instance base must be a probability measure")


@dataclass(frozen=True, eq=False)
class OracleSolution:
    measure: DiscreteMeasure
    kkt_residual: float
    path: str


# ---------------------------------------------------------------------------
# grid plumbing, reimplemented on purpose (see module docstring)

def _lift(grid: GridSpec, axis: str, vals) -> np.ndarray:
    vals = np.asarray(vals, dtype=np.float64)
    if grid.dim == 1:
        return vals.copy()
    nx, ny = grid.shape
    return np.tile(vals, ny) if axis == "x" else np.repeat(vals, nx)


def _linear_rows(grid: GridSpec, constraints) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Every constraint as affine rows: g(p) = A p + b, feasible iff
    g = 0 on equality rows and g >= 0 on inequality rows."""
    rows: list[np.ndarray] = []
    offsets: list[float] = []
    eq_flags: list[bool] = []
    for c in constraints:
        if c.kind in (MOMENT_INEQUALITY, MOMENT_EQUALITY):
            rows.append(np.asarray(c.z.values, dtype=np.float64))
            offsets.append(0.0)
            eq_flags.append(c.kind == MOMENT_EQUALITY)
        elif c.kind == FIXED_MARGINAL:
            n_ax = c.target.grid.n_nodes
            for u in range(n_ax):
                e = np.zeros(n_ax)
                e[u] = 1.0
                rows.append(_lift(grid, c.axis, e))
                offsets.append(-float(c.target.weights[u]))
                eq_flags.append(True)
        elif c.kind == STOCHASTIC_ORDER_MARGINAL:
            n_ax = c.target.grid.n_nodes
            target_cdf = np.cumsum(c.target.weights)
            for u in range(n_ax):
                prefix = np.zeros(n_ax)
                prefix[: u + 1] = 1.0
                rows.append(-_lift(grid, c.axis, prefix))
                offsets.append(float(target_cdf[u]))
                eq_flags.append(False)
        else:
            raise InputError(f"unsupported constraint kind {c.kind!r}")
    return np.array(rows), np.array(offsets), np.array(eq_flags, dtype=bool)


def _violations(A, b, is_eq, p) -> np.ndarray:
    g = A @ p + b
    return np.where(is_eq, np.abs(g), np.maximum(0.0, -g))


def _kkt_residual(A, b, is_eq, q, p, lam) -> float:
    """max of feasibility, complementarity, dual feasibility and the
    stationarity range of the Lagrangian gradient over the support."""
    g = A @ p + b
    feas = float(_violations(A, b, is_eq, p).max(initial=0.0))
    ineq = ~is_eq
    compl = float(np.abs(lam[ineq] * g[ineq]).max(initial=0.0))
    dual_feas = float(np.maximum(0.0, -lam[ineq]).max(initial=0.0))
    support = p > 0.0
    grad = np.log(p[support] / q[support]) + 1.0
    r = grad - A[:, support].T @ lam
    stat = 0.5 * float(r.max() - r.min()) if r.size else 0.0
    return max(feas, compl, dual_feas, stat)


# ---------------------------------------------------------------------------
# parametric route (moment constraints only)

def _tilt_weights(Z, alphas, qw) -> np.ndarray:
    y = Z.T @ alphas
    w = np.exp(y - y.max()) * qw
    return w / w.sum()


def _tilted_means(Z, alphas, qw) -> np.ndarray:
    return Z @ _tilt_weights(Z, alphas, qw)


def _log_partition(Z, alphas, qw) -> float:
    y = Z.T @ alphas
    shift = float(y.max())
    return shift + math.log(float(np.sum(np.exp(y - shift) * qw)))


def _coordinate_root(Z, alphas, qw, i, is_eq) -> float:
    """Root of the i-th tilted mean in its own coordinate (the mean is
    nondecreasing in it), by doubling then bisection."""

    def mean_at(a: float) -> float:
        trial = alphas.copy()
        trial[i] = a
        return float(_tilted_means(Z, trial, qw)[i])

    lo_limit = -_ALPHA_CAP if is_eq else 0.0
    m0 = mean_at(lo_limit)
    if m0 >= 0.0:
        if not is_eq:
            return 0.0
        if m0 > 0.0:
            raise OracleFailureError("equality dual unbounded below the cap")
    lo = lo_limit
    hi = max(1.0, abs(alphas[i]))
    while mean_at(hi) < 0.0:
        hi *= 2.0
        if hi > _ALPHA_CAP:
            raise OracleFailureError("dual coordinate exceeds the search cap")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_at(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _parametric(inst: SmallInstance) -> tuple[DiscreteMeasure, np.ndarray]:
    t = len(inst.constraints)
    qw = inst.q.weights
    Z = np.array([c.z.values for c in inst.constraints])
    is_eq = np.array([c.kind == MOMENT_EQUALITY for c in inst.constraints])

    # coarse lattice start
    best = np.zeros(t)
    best_phi = _log_partition(Z, best, qw)
    lattices = [
        [s * c for c in _GRID_CANDIDATES for s in ((1.0, -1.0) if is_eq[i] else (1.0,))]
        for i in range(t)
    ]
    from itertools import product
    for combo in product(*lattices):
        alphas = np.array(combo)
        phi = _log_partition(Z, alphas, qw)
        if phi < best_phi:
            best_phi = phi
            best = alphas

    alphas = best
    for _ in range(500):
        moved = 0.0
        for i in range(t):
            new = _coordinate_root(Z, alphas, qw, i, bool(is_eq[i]))
            moved = max(moved, abs(new - alphas[i]))
            alphas[i] = new
        if moved <= 1e-14 * (1.0 + float(np.abs(alphas).max())):
            break
    p = _tilt_weights(Z, alphas, qw)
    return DiscreteMeasure(inst.q.grid, p), alphas


# ---------------------------------------------------------------------------
# fallback route (any catalog kind)

def _simplex_project(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css - 1.0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _penalized_descent(inst: SmallInstance) -> tuple[DiscreteMeasure, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Augmented-Lagrangian PGD on the simplex.  Returns the candidate
    and the multipliers together with the row system."""
    A, b, is_eq = _linear_rows(inst.q.grid, inst.constraints)
    qw = inst.q.weights
    m = A.shape[0]
    p = qw / qw.sum()
    lam = np.zeros(m)
    mu = 10.0
    ineq = ~is_eq

    def lagrangian(pv: np.ndarray) -> float:
        g = A @ pv + b
        val = kernels.kl_sum(pv, qw)
        shifted = lam[ineq] - mu * g[ineq]
        val += float(np.sum(np.maximum(0.0, shifted) ** 2 - lam[ineq] ** 2)) / (2.0 * mu)
        val += float(np.sum(-lam[is_eq] * g[is_eq] + 0.5 * mu * g[is_eq] ** 2))
        return val

    def gradient(pv: np.ndarray) -> np.ndarray:
        g = A @ pv + b
        coef = np.zeros(m)
        coef[ineq] = -np.maximum(0.0, lam[ineq] - mu * g[ineq])
        coef[is_eq] = -lam[is_eq] + mu * g[is_eq]
        return np.log(np.maximum(pv, 1e-300) / qw) + 1.0 + A.T @ coef

    evals = 0
    budget = 400_000
    inner_tol = 1e-9
    for _outer in range(80):
        eta = 1.0
        value = lagrangian(p)
        for _inner in range(4000):
            grad = gradient(p)
            trial = _simplex_project(p - eta * grad)
            evals += 1
            if evals >= budget:
                break
            tval = lagrangian(trial)
            if tval <= value - 1e-17:
                step_gap = float(np.abs(trial - p).max())
                p = trial
                value = tval
                eta = min(eta * 1.25, 1e3)
                if step_gap <= inner_tol * min(eta, 1.0):
                    break
            else:
                eta *= 0.5
                if eta < 1e-18:
                    break
        g = A @ p + b
        lam = np.where(ineq, np.maximum(0.0, lam - mu * g), lam - mu * g)
        if _kkt_residual(A, b, is_eq, qw, p, lam) <= 5e-9:
            break
        if evals >= budget:
            break
        mu = min(mu * 4.0, 1e13)
        inner_tol = max(inner_tol * 0.3, 1e-14)
    return DiscreteMeasure(inst.q.grid, p), lam, A, b, is_eq


def _refine_multipliers(A, b, is_eq, q, p, lam) -> np.ndarray:
    """Least-squares multipliers for a near-optimal candidate.

    The running multipliers of the penalized descent lag behind the
    primal iterate, so the certificate is taken over the best of the raw
    and refitted vectors.  Refitting solves the support stationarity
    system (with a free constant for the simplex normalizer) over the
    active rows, dropping inequality rows whose coefficient comes out
    negative.
    """
    g = A @ p + b
    ineq = ~is_eq
    support = p > 0.0
    grad = np.log(p[support] / q[support]) + 1.0
    m = A.shape[0]
    idx = np.flatnonzero(is_eq | (g <= 1e-7))
    best = lam
    best_res = _kkt_residual(A, b, is_eq, q, p, lam)
    for _ in range(m + 1):
        if idx.size == 0:
            break
        design = np.vstack([A[idx][:, support], np.ones(int(support.sum()))]).T
        sol, *_ = np.linalg.lstsq(design, grad, rcond=None)
        cand = np.zeros(m)
        cand[idx] = sol[:-1]
        bad = ineq & (cand < 0.0)
        if bad.any():
            idx = np.array([j for j in idx if not bad[j]], dtype=int)
            continue
        res = _kkt_residual(A, b, is_eq, q, p, cand)
        if res < best_res:
            best, best_res = cand, res
        break
    return best


# ---------------------------------------------------------------------------
# public API

def solve_with_certificate(inst: SmallInstance) -> OracleSolution:
    """Solve by the best applicable route and certify the answer."""
    all_moment = all(
        c.kind in (MOMENT_INEQUALITY, MOMENT_EQUALITY) for c in inst.constraints
    )
    attempts: list[tuple[str, DiscreteMeasure, float]] = []
    if all_moment and inst.constraints:
        A, b, is_eq = _linear_rows(inst.q.grid, inst.constraints)
        p, alphas = _parametric(inst)
        res = _kkt_residual(A, b, is_eq, inst.q.weights, p.weights, alphas)
        if res <= KKT_ACCEPT:
            return OracleSolution(measure=p, kkt_residual=res, path="parametric")
        attempts.append(("parametric", p, res))
    if not inst.constraints:
        return OracleSolution(measure=inst.q, kkt_residual=0.0, path="trivial")
    p, lam, A, b, is_eq = _penalized_descent(inst)
    lam = _refine_multipliers(A, b, is_eq, inst.q.weights, p.weights, lam)
    res = _kkt_residual(A, b, is_eq, inst.q.weights, p.weights, lam)
    if res <= KKT_ACCEPT:
        return OracleSolution(measure=p, kkt_residual=res, path="descent")
    attempts.append(("descent", p, res))
    detail = ", ".join(f"{name}: {r:.3e}" for name, _, r in attempts)
    raise OracleFailureError(f"no route certified the projection ({detail})")


def brute_force_projection(inst: SmallInstance) -> DiscreteMeasure:
    """The projection of the instance base onto its constraint sets."""
    return solve_with_certificate(inst).measure


def check_pythagorean(r: DiscreteMeasure, s: DiscreteMeasure, samples) -> float:
    """Largest violation of I(p|r) + I(r|s) <= I(p|s) over the samples.

    At most 1e-8 (up to rounding) when r is the true projection and the
    samples are feasible; a materially positive value certifies r is not
    the projection.  Samples charging r-null sets yield +inf immediately.
    """
    base_term = kernels.kl_sum(r.weights, s.weights)
    worst = -math.inf
    seen = False
    for p in samples:
        seen = True
        to_r = kernels.kl_sum(p.weights, r.weights)
        to_s = kernels.kl_sum(p.weights, s.weights)
        if math.isinf(to_s):
            continue
        if math.isinf(to_r):
            return math.inf
        worst = max(worst, to_r + base_term - to_s)
    if not seen:
        raise InputError("check_pythagorean needs at least one sample")
    return worst


def feasible_tilt_samples(inst: SmallInstance, count: int, rng: np.random.Generator,
                          max_tries: int | None = None) -> list[DiscreteMeasure]:
    """Random feasible points: dual-cone elements (nonnegative or free
    coefficients on the constraint statistics) mapped through the
    exponential family and kept when they satisfy every constraint.

    Moment constraints only; marginal kinds need bespoke constructions.
    """
    if any(c.kind not in (MOMENT_INEQUALITY, MOMENT_EQUALITY) for c in inst.constraints):
        raise InputError("tilt sampling supports moment constraints only")
    A, b, is_eq = _linear_rows(inst.q.grid, inst.constraints)
    Z = np.array([c.z.values for c in inst.constraints])
    qw = inst.q.weights
    out: list[DiscreteMeasure] = []
    tries = 0
    cap = max_tries if max_tries is not None else 400 * count
    scales = (0.5, 1.0, 2.0, 4.0, 8.0)
    while len(out) < count and tries < cap:
        tries += 1
        scale = scales[tries % len(scales)]
        coefs = np.array([
            rng.normal(0.0, scale) if eq else abs(rng.normal(0.0, scale))
            for eq in is_eq
        ])
        p = _tilt_weights(Z, coefs, qw)
        if float(_violations(A, b, is_eq, p).max(initial=0.0)) <= 1e-9:
            out.append(DiscreteMeasure(inst.q.grid, p))
    if not out:
        raise OracleFailureError("no feasible tilt found within the try budget")
    return out

"""Single-set projection tests.

Each projection kind is checked three ways: against hand-computed or
independently solved reference outputs, against the divergence identity
(the reported step cost equals the divergence of the output from the
input), and against optimality (no feasible competitor does better).
"""

import math

import numpy as np
import pytest

from iproj.constraints import (
    Constraint,
    DualIncrement,
    feasible,
    fixed_marginal,
    moment_equality,
    moment_inequality,
    pava,
    project,
    stochastic_order_marginal,
)
from iproj.errors import (
    DomainError,
    GridMismatchError,
    InputError,
    ProjectionUndefinedError,
)
from iproj.measure import (
    DensityVector,
    DiscreteMeasure,
    GridSpec,
    axis_marginal,
    kl_divergence,
    uniform_measure,
)


def _tilted_mean(z, w, alpha):
    e = np.exp(alpha * z - (alpha * z).max())
    return float((e * w * z).sum() / (e * w).sum())


def _bisect_alpha(z, w, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _tilted_mean(z, w, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _grid2(nx=3, ny=4):
    return GridSpec(shape=(nx, ny), domain=((0.0, 1.0), (0.0, 1.0)))


class TestConstraintValidation:
    def test_moment_requires_z_only(self, unit_grid):
        with pytest.raises(InputError):
            Constraint(kind="moment_inequality", axis="x")

    def test_marginal_requires_axis_and_target(self):
        with pytest.raises(InputError):
            Constraint(kind="fixed_marginal", axis="x")

    def test_marginal_target_must_be_probability(self):
        g = GridSpec(shape=(4,), domain=((0.0, 1.0),))
        heavy = DiscreteMeasure(g, np.full(4, 1.0))  # mass 4
        with pytest.raises(InputError):
            fixed_marginal("x", heavy)

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            Constraint(kind="entropy_cap")


class TestFeasible:
    def test_moment_inequality_directions(self, unit_grid, unit_uniform):
        x = unit_grid.node_columns()[0]
        ok, v = feasible(moment_inequality(DensityVector(unit_grid, x - 0.3)),
                         unit_uniform, 1e-12)
        assert ok and v == 0.0
        ok, v = feasible(moment_inequality(DensityVector(unit_grid, x - 0.7)),
                         unit_uniform, 1e-12)
        assert not ok
        assert v == pytest.approx(0.2, abs=1e-12)

    def test_moment_equality_two_sided(self, unit_grid, unit_uniform):
        x = unit_grid.node_columns()[0]
        c = moment_equality(DensityVector(unit_grid, x - 0.3))
        ok, v = feasible(c, unit_uniform, 1e-12)
        assert not ok
        assert v == pytest.approx(0.2, abs=1e-12)

    def test_fixed_marginal_violation_is_tv(self):
        g = _grid2(2, 2)
        m = DiscreteMeasure(g, np.array([0.25, 0.25, 0.25, 0.25]))
        tgt = DiscreteMeasure(g.axis_grid("x"), np.array([0.75, 0.25]))
        ok, v = feasible(fixed_marginal("x", tgt), m, 1e-9)
        assert not ok
        assert v == pytest.approx(0.5)

    def test_stochastic_order_clamps_one_side(self):
        g = GridSpec(shape=(3,), domain=((0.0, 1.0),))
        tgt = DiscreteMeasure(g, np.array([0.2, 0.3, 0.5]))
        # CDF (0.1, 0.3, 1.0) never exceeds target CDF (0.2, 0.5, 1.0)
        big = DiscreteMeasure(g, np.array([0.1, 0.2, 0.7]))
        ok, v = feasible(stochastic_order_marginal("x", tgt), big, 0.0)
        assert ok and v == 0.0
        small = DiscreteMeasure(g, np.array([0.5, 0.3, 0.2]))
        ok, v = feasible(stochastic_order_marginal("x", tgt), small, 1e-9)
        assert not ok
        assert v == pytest.approx(0.3, abs=1e-12)


class TestMomentProjection:
    def test_matches_independent_bisection(self):
        g = GridSpec(shape=(512,), domain=((0.0, 1.0),))
        q = uniform_measure(g)
        x = g.node_columns()[0]
        z = x - 0.7
        res = project(moment_inequality(DensityVector(g, z)), q)
        alpha = _bisect_alpha(z, q.weights, 0.0, 16.0)
        want = np.exp(alpha * z) * q.weights
        want /= want.sum()
        np.testing.assert_allclose(res.measure.weights, want, atol=1e-10)
        assert res.dual.alpha == pytest.approx(alpha, abs=1e-8)

    def test_inactive_constraint_only_normalizes(self):
        g = GridSpec(shape=(64,), domain=((0.0, 1.0),))
        q = uniform_measure(g)
        x = g.node_columns()[0]
        half = DiscreteMeasure(g, q.weights * 0.5)
        res = project(moment_inequality(DensityVector(g, x - 0.3)), half)
        np.testing.assert_allclose(res.measure.weights, q.weights, atol=1e-15)
        assert res.dual.alpha == 0.0
        # raw cost of an inactive step on a sub-probability input: -ln mass
        assert res.divergence == pytest.approx(-math.log(0.5), rel=1e-12)

    def test_equality_reaches_target_exactly(self):
        g = GridSpec(shape=(256,), domain=((0.0, 1.0),))
        q = uniform_measure(g)
        x = g.node_columns()[0]
        res = project(moment_equality(DensityVector(g, x - 0.25)), q)
        mean = float(np.dot(x, res.measure.weights))
        assert mean == pytest.approx(0.25, abs=1e-9)
        assert res.dual.alpha < 0.0

    def test_optimality_among_feasible_tilts(self, rng):
        """The projection beats every other feasible exponential tilt."""
        g = GridSpec(shape=(128,), domain=((0.0, 1.0),))
        q = uniform_measure(g)
        x = g.node_columns()[0]
        z = x - 0.65
        c = moment_inequality(DensityVector(g, z))
        res = project(c, q)
        best = kl_divergence(res.measure, q)
        for alpha in (0.5, 1.0, 2.0, 5.0, 8.0):
            w = np.exp(alpha * z) * q.weights
            cand = DiscreteMeasure(g, w / w.sum())
            ok, _ = feasible(c, cand, 1e-9)
            if ok:
                assert best <= kl_divergence(cand, q) + 1e-12

    def test_zero_mass_input_rejected(self, unit_grid):
        dead = DiscreteMeasure(unit_grid, np.zeros(16))
        x = unit_grid.node_columns()[0]
        with pytest.raises(DomainError):
            project(moment_inequality(DensityVector(unit_grid, x)), dead)


class TestFixedMarginalProjection:
    def test_small_example_by_hand(self):
        g = _grid2(2, 2)
        # joint weights, x fastest: (x0,y0) (x1,y0) (x0,y1) (x1,y1)
        s = DiscreteMeasure(g, np.array([0.1, 0.3, 0.2, 0.4]))
        tgt = DiscreteMeasure(g.axis_grid("x"), np.array([0.5, 0.5]))
        res = project(fixed_marginal("x", tgt), s)
        # marginal of s on x is (0.3, 0.7); each column scales by tgt/marg
        want = np.array([0.1 * 5 / 3, 0.3 * 5 / 7, 0.2 * 5 / 3, 0.4 * 5 / 7])
        np.testing.assert_allclose(res.measure.weights, want, rtol=1e-14)

    def test_marginal_hits_target_exactly(self, rng):
        g = _grid2(5, 7)
        w = rng.random(35) + 0.01
        s = DiscreteMeasure(g, w / w.sum())
        t = rng.random(5) + 0.1
        tgt = DiscreteMeasure(g.axis_grid("x"), t / t.sum())
        res = project(fixed_marginal("x", tgt), s)
        got = axis_marginal(res.measure, "x").weights
        np.testing.assert_allclose(got, tgt.weights, atol=1e-12)

    def test_conditional_law_preserved(self, rng):
        """Scaling whole slices keeps the conditional distribution given
        the constrained axis unchanged."""
        g = _grid2(3, 4)
        w = rng.random(12) + 0.05
        s = DiscreteMeasure(g, w / w.sum())
        t = rng.random(3) + 0.1
        tgt = DiscreteMeasure(g.axis_grid("x"), t / t.sum())
        res = project(fixed_marginal("x", tgt), s)
        sw = s.weights.reshape(4, 3)
        pw = res.measure.weights.reshape(4, 3)
        for col in range(3):
            np.testing.assert_allclose(
                pw[:, col] / pw[:, col].sum(),
                sw[:, col] / sw[:, col].sum(),
                atol=1e-12,
            )

    def test_dead_node_with_target_mass_is_undefined(self):
        g = _grid2(2, 2)
        s = DiscreteMeasure(g, np.array([0.0, 0.5, 0.0, 0.5]))  # x0 column dead
        tgt = DiscreteMeasure(g.axis_grid("x"), np.array([0.5, 0.5]))
        with pytest.raises(ProjectionUndefinedError):
            project(fixed_marginal("x", tgt), s)

    def test_axis_y_works_symmetrically(self, rng):
        g = _grid2(3, 4)
        w = rng.random(12) + 0.05
        s = DiscreteMeasure(g, w / w.sum())
        t = rng.random(4) + 0.1
        tgt = DiscreteMeasure(g.axis_grid("y"), t / t.sum())
        res = project(fixed_marginal("y", tgt), s)
        np.testing.assert_allclose(
            axis_marginal(res.measure, "y").weights, tgt.weights, atol=1e-12
        )


class TestStochasticOrderProjection:
    def _tgt(self, weights):
        g = GridSpec(shape=(len(weights),), domain=((0.0, 1.0),))
        return DiscreteMeasure(g, np.asarray(weights, dtype=float))

    def test_noop_when_already_dominating(self):
        tgt = self._tgt([0.5, 0.3, 0.2])
        s = DiscreteMeasure(tgt.grid, np.array([0.2, 0.3, 0.5]))
        res = project(stochastic_order_marginal("x", tgt), s)
        np.testing.assert_allclose(res.measure.weights, s.weights, atol=1e-12)
        assert res.divergence == pytest.approx(0.0, abs=1e-12)

    def test_pooling_example_by_hand(self):
        """ratio (1.5, 0.6, 4/3): the first two pool to (0.3+0.3)/0.7 and
        the third stays alone, so p = (6/35, 15/35, 2/5)."""
        tgt = self._tgt([0.3, 0.3, 0.4])
        s = DiscreteMeasure(tgt.grid, np.array([0.2, 0.5, 0.3]))
        res = project(stochastic_order_marginal("x", tgt), s)
        want = np.array([6.0 / 35.0, 15.0 / 35.0, 0.4])
        np.testing.assert_allclose(res.measure.weights, want, atol=1e-14)

    def test_target_mass_on_dead_tail_is_undefined(self):
        """If the input cannot put mass at or past a target atom, CDF
        dominance is impossible and the projection must refuse."""
        tgt = self._tgt([0.5, 0.4, 0.1])
        s = DiscreteMeasure(tgt.grid, np.array([0.2, 0.8, 0.0]))
        with pytest.raises(ProjectionUndefinedError):
            project(stochastic_order_marginal("x", tgt), s)

    def test_output_cdf_never_exceeds_target(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 12))
            t = rng.random(n) + 1e-3
            tgt = self._tgt(t / t.sum())
            w = rng.random(n) + 1e-3
            s = DiscreteMeasure(tgt.grid, w / w.sum())
            res = project(stochastic_order_marginal("x", tgt), s)
            excess = np.cumsum(res.measure.weights) - np.cumsum(tgt.weights)
            assert float(excess.max()) <= 1e-9

    def test_density_integrates_to_one_under_input(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 10))
            t = rng.random(n) + 1e-3
            tgt = self._tgt(t / t.sum())
            w = rng.random(n) + 1e-3
            s = DiscreteMeasure(tgt.grid, w / w.sum())
            res = project(stochastic_order_marginal("x", tgt), s)
            a = res.measure.weights / s.weights
            assert float((a * s.weights).sum()) == pytest.approx(1.0, abs=1e-10)

    def test_marginal_matches_target_off_pooled_blocks(self):
        tgt = self._tgt([0.3, 0.3, 0.4])
        s = DiscreteMeasure(tgt.grid, np.array([0.2, 0.5, 0.3]))
        # ratio = (1.5, 0.6, 4/3): only the first two pool
        res = project(stochastic_order_marginal("x", tgt), s)
        assert res.measure.weights[2] == pytest.approx(0.4, abs=1e-14)

    def test_zero_mass_nodes_stay_empty(self):
        tgt = self._tgt([0.6, 0.0, 0.4])
        s = DiscreteMeasure(tgt.grid, np.array([0.5, 0.0, 0.5]))
        res = project(stochastic_order_marginal("x", tgt), s)
        assert res.measure.weights[1] == 0.0
        assert res.measure.is_probability()

    def test_2d_projection_via_axis(self, rng):
        g = _grid2(4, 3)
        w = rng.random(12) + 0.05
        s = DiscreteMeasure(g, w / w.sum())
        t = rng.random(4) + 0.1
        tgt = DiscreteMeasure(g.axis_grid("x"), t / t.sum())
        c = stochastic_order_marginal("x", tgt)
        res = project(c, s)
        ok, v = feasible(c, res.measure, 1e-9)
        assert ok, f"violation {v}"


class TestDivergenceIdentity:
    """The reported step cost is the divergence of the output from the
    (raw, possibly unnormalized) input, for every kind."""

    def _assert_identity(self, c, s):
        res = project(c, s)
        direct = _kl_raw(res.measure, s)
        assert res.divergence == pytest.approx(direct, abs=1e-9)

    def test_moment_inequality(self, rng):
        g = GridSpec(shape=(64,), domain=((0.0, 1.0),))
        x = g.node_columns()[0]
        w = rng.random(64) + 1e-3
        s = DiscreteMeasure(g, 0.8 * w / w.sum())  # sub-probability input
        self._assert_identity(moment_inequality(DensityVector(g, x - 0.7)), s)

    def test_moment_equality(self, rng):
        g = GridSpec(shape=(64,), domain=((0.0, 1.0),))
        x = g.node_columns()[0]
        w = rng.random(64) + 1e-3
        s = DiscreteMeasure(g, 1.3 * w / w.sum())
        self._assert_identity(moment_equality(DensityVector(g, x - 0.4)), s)

    def test_fixed_marginal(self, rng):
        g = _grid2(4, 5)
        w = rng.random(20) + 0.01
        s = DiscreteMeasure(g, 0.9 * w / w.sum())
        t = rng.random(4) + 0.1
        tgt = DiscreteMeasure(g.axis_grid("x"), t / t.sum())
        self._assert_identity(fixed_marginal("x", tgt), s)

    def test_stochastic_order(self, rng):
        g = GridSpec(shape=(9,), domain=((0.0, 1.0),))
        w = rng.random(9) + 0.01
        s = DiscreteMeasure(g, 1.1 * w / w.sum())
        t = rng.random(9) + 0.1
        tgt = DiscreteMeasure(g, t / t.sum())
        self._assert_identity(stochastic_order_marginal("x", tgt), s)


class TestDualIncrements:
    def test_moment_dual_on_grid(self, unit_grid):
        x = unit_grid.node_columns()[0]
        d = DualIncrement(kind="moment_inequality", alpha=2.0,
                          z=DensityVector(unit_grid, x))
        np.testing.assert_allclose(d.on_grid(unit_grid), 2.0 * x)

    def test_zero_alpha_gives_zero_vector(self, unit_grid):
        x = unit_grid.node_columns()[0]
        d = DualIncrement(kind="moment_inequality", alpha=0.0,
                          z=DensityVector(unit_grid, x))
        assert not d.on_grid(unit_grid).any()

    def test_marginal_dual_centered_against_target(self, rng):
        g = _grid2(5, 4)
        w = rng.random(20) + 0.01
        s = DiscreteMeasure(g, w / w.sum())
        t = rng.random(5) + 0.1
        tgt = DiscreteMeasure(g.axis_grid("x"), t / t.sum())
        res = project(fixed_marginal("x", tgt), s)
        centered = float(np.dot(res.dual.axis_values, tgt.weights))
        assert centered == pytest.approx(0.0, abs=1e-9)

    def test_stochastic_order_dual_nondecreasing(self, rng):
        g = GridSpec(shape=(11,), domain=((0.0, 1.0),))
        w = rng.random(11) + 0.01
        s = DiscreteMeasure(g, w / w.sum())
        t = rng.random(11) + 0.1
        tgt = DiscreteMeasure(g, t / t.sum())
        res = project(stochastic_order_marginal("x", tgt), s)
        assert np.all(np.diff(res.dual.axis_values) >= -1e-12)

    def test_orthogonality_of_dual_and_output(self, rng):
        """integral of y against the projected measure vanishes for every
        kind (complementary slackness)."""
        g2 = _grid2(4, 4)
        w = rng.random(16) + 0.02
        s = DiscreteMeasure(g2, w / w.sum())
        x = g2.node_columns()[0]
        t = rng.random(4) + 0.1
        tgt = DiscreteMeasure(g2.axis_grid("x"), t / t.sum())
        cases = [
            moment_inequality(DensityVector(g2, x - 0.7)),
            moment_equality(DensityVector(g2, x - 0.4)),
            fixed_marginal("x", tgt),
            stochastic_order_marginal("x", tgt),
        ]
        for c in cases:
            res = project(c, s)
            y = res.dual.on_grid(g2)
            assert abs(float(np.dot(y, res.measure.weights))) <= 1e-9


class TestPavaWrapper:
    def test_rejects_nonpositive_weights(self):
        with pytest.raises(InputError):
            pava([1.0, 2.0], [1.0, 0.0])

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            pava([], [])

    def test_rejects_infinite_values(self):
        with pytest.raises(InputError):
            pava([math.inf, 1.0], [1.0, 1.0])

    def test_basic_pool(self):
        np.testing.assert_allclose(pava([2.0, 1.0], [1.0, 1.0]), [1.5, 1.5])


def _kl_raw(p: DiscreteMeasure, s: DiscreteMeasure) -> float:
    """Divergence of p from s without requiring s to be a probability."""
    out = 0.0
    for pk, sk in zip(p.weights.tolist(), s.weights.tolist()):
        if pk == 0.0:
            continue
        if sk == 0.0:
            return math.inf
        out += pk * math.log(pk / sk)
    return out

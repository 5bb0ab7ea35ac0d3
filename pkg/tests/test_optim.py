import numpy as np
import pytest

from lppm.optim import (FEAS_TOL, FwResult, LinearProgram, constraint_violation,
                        dump_lp, maximize_concave, solve_lp)
from support import brute_force_lp, random_bounded_lp


class TestSolveLp:
    def test_min_x_above_three(self):
        # min x s.t. x >= 3, via -x <= -3
        lp = LinearProgram(c=np.array([1.0]), a_ub=np.array([[-1.0]]),
                           b_ub=np.array([-3.0]))
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(3.0, abs=1e-9)
        assert sol.x[0] == pytest.approx(3.0, abs=1e-9)

    def test_constant_image_belief_lp(self):
        # max secret inflow over {b on the simplex, b_1 <= eps} for a chain
        # whose columns are flat: every feasible b maps to secret mass 0.5
        chain = np.array([[0.5, 0.5], [0.5, 0.5]])
        sel = np.array([1.0, 0.0])
        inflow = chain @ sel
        lp = LinearProgram(c=-inflow,
                           a_ub=sel[None, :], b_ub=np.array([0.4]),
                           a_eq=np.ones((1, 2)), b_eq=np.array([1.0]))
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert -sol.objective == pytest.approx(0.5, abs=1e-9)

    def test_infeasible_reported(self):
        lp = LinearProgram(c=np.array([1.0, 1.0]),
                           a_ub=np.array([[1.0, 1.0], [-1.0, -1.0]]),
                           b_ub=np.array([1.0, -3.0]))
        assert solve_lp(lp).status == "infeasible"

    def test_unbounded_reported(self):
        lp = LinearProgram(c=np.array([-1.0]))
        assert solve_lp(lp).status == "unbounded"

    def test_equality_only_system(self):
        lp = LinearProgram(c=np.array([2.0, 1.0]),
                           a_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, [0.0, 1.0], atol=1e-9)

    def test_free_variable_support(self):
        # min x with x free and x >= -7 as a row constraint
        lp = LinearProgram(c=np.array([1.0]), a_ub=np.array([[-1.0]]),
                           b_ub=np.array([7.0]),
                           lb=np.array([-np.inf]))
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-7.0, abs=1e-9)

    def test_upper_bounds(self):
        lp = LinearProgram(c=np.array([-1.0, -1.0]), ub=np.array([2.0, 3.0]))
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-5.0, abs=1e-9)

    def test_redundant_equality_rows_handled(self):
        a_eq = np.array([[1.0, 1.0], [2.0, 2.0]])
        lp = LinearProgram(c=np.array([1.0, 2.0]), a_eq=a_eq,
                           b_eq=np.array([1.0, 2.0]))
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0, abs=1e-9)

    def test_matches_vertex_enumeration(self, rng):
        for _ in range(60):
            c, a, b = random_bounded_lp(rng, max_vars=8, max_rows=4)
            sol = solve_lp(LinearProgram(c=c, a_ub=a, b_ub=b))
            ref = brute_force_lp(c, a, b)
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(ref, abs=1e-8)

    def test_deterministic_given_identical_input(self, rng):
        c, a, b = random_bounded_lp(rng, max_vars=10, max_rows=4)
        lp = LinearProgram(c=c, a_ub=a, b_ub=b)
        s1, s2 = solve_lp(lp), solve_lp(lp)
        assert s1.iterations == s2.iterations
        np.testing.assert_array_equal(s1.x, s2.x)

    def test_optimal_solution_feasible(self, rng):
        for _ in range(30):
            c, a, b = random_bounded_lp(rng, max_vars=8, max_rows=4)
            lp = LinearProgram(c=c, a_ub=a, b_ub=b)
            sol = solve_lp(lp)
            assert sol.max_violation <= FEAS_TOL
            assert constraint_violation(lp, sol.x) == sol.max_violation
            assert sol.objective == pytest.approx(float(c @ sol.x), abs=1e-9)

    def test_weak_duality_spot_check(self, rng):
        # for min c.x, Ax <= b, x >= 0 with c >= 0: any y <= 0 with
        # A^T y <= c satisfies y.b <= optimum
        for _ in range(20):
            c, a, b = random_bounded_lp(rng, max_vars=6, max_rows=3)
            c = np.abs(c)
            sol = solve_lp(LinearProgram(c=c, a_ub=a, b_ub=b))
            y0 = -rng.random(a.shape[0])
            # largest t in [0, 1] keeping A^T (t y0) <= c elementwise
            aty = a.T @ y0
            pos = aty > 1e-12
            t = min(1.0, float((c[pos] / aty[pos]).min())) if pos.any() else 1.0
            assert float(b @ (t * y0)) <= sol.objective + 1e-8

    def test_dump_lp_round_trips_text(self, tmp_path):
        lp = LinearProgram(c=np.array([1.0, -2.0]),
                           a_ub=np.array([[1.0, 1.0]]), b_ub=np.array([4.0]),
                           a_eq=np.array([[1.0, 0.0]]), b_eq=np.array([1.0]))
        path = tmp_path / "lp.txt"
        dump_lp(lp, path)
        text = path.read_text()
        assert text.startswith("lp 2 1 1")
        assert "c 1 -2" in text
        assert "ub_row 1 1 | 4" in text
        assert "eq_row 1 0 | 1" in text


class TestMaximizeConcave:
    def simplex(self, n):
        return LinearProgram(c=np.zeros(n), a_eq=np.ones((1, n)),
                             b_eq=np.array([1.0]))

    def test_quadratic_interior_maximizer(self):
        x0 = np.array([0.5, 0.3, 0.2])
        fun = lambda x: -float(np.sum((x - x0) ** 2))
        grad = lambda x: -2.0 * (x - x0)
        res = maximize_concave(fun, grad, self.simplex(3))
        np.testing.assert_allclose(res.x, x0, atol=1e-4)

    def test_entropy_over_simplex_is_uniform(self):
        def fun(x):
            pos = x[x > 1e-300]
            return -float(np.sum(pos * np.log(pos)))

        def grad(x):
            return -(np.log(np.maximum(x, 1e-300)) + 1.0)

        res = maximize_concave(fun, grad, self.simplex(4))
        np.testing.assert_allclose(res.x, 0.25, atol=1e-4)
        assert res.gap <= 1e-4

    def test_entropy_restricted_polytope_matches_grid(self):
        # simplex on 3 points with x_0 <= 0.2
        poly = LinearProgram(c=np.zeros(3), a_eq=np.ones((1, 3)),
                             b_eq=np.array([1.0]),
                             a_ub=np.array([[1.0, 0.0, 0.0]]),
                             b_ub=np.array([0.2]))

        def fun(x):
            pos = x[x > 1e-300]
            return -float(np.sum(pos * np.log(pos)))

        def grad(x):
            return -(np.log(np.maximum(x, 1e-300)) + 1.0)

        res = maximize_concave(fun, grad, poly)
        best = -np.inf
        for i in np.arange(0.0, 0.2 + 1e-12, 0.001):
            for j in np.arange(0.0, 1.0 - i + 1e-12, 0.001):
                best = max(best, fun(np.array([i, j, 1.0 - i - j])))
        assert res.value == pytest.approx(best, abs=1e-3)

    def test_iterates_stay_inside_polytope(self):
        poly = self.simplex(5)
        seen = []

        def fun(x):
            seen.append(x.copy())
            return -float(np.sum(x ** 2))

        res = maximize_concave(fun, lambda x: -2.0 * x, poly)
        for x in seen + [res.x]:
            assert abs(x.sum() - 1.0) <= 1e-9
            assert x.min() >= -1e-12

    def test_infeasible_polytope_raises(self):
        poly = LinearProgram(c=np.zeros(2), a_eq=np.ones((1, 2)),
                             b_eq=np.array([1.0]),
                             a_ub=np.array([[1.0, 1.0]]), b_ub=np.array([0.2]))
        with pytest.raises(ValueError):
            maximize_concave(lambda x: 0.0, lambda x: np.zeros(2), poly)

    def test_result_reports_gap(self):
        res = maximize_concave(lambda x: -float(x @ x), lambda x: -2.0 * x,
                               self.simplex(3), max_iter=3)
        assert isinstance(res, FwResult)
        assert res.gap >= 0.0
        assert res.iterations <= 3

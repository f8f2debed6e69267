"""Tests for the augmented-Lagrangian solver and finite differences."""

import itertools

import numpy as np
import pytest

from scenopt.errors import InvalidStartError
from scenopt.solver import (
    NlpProgram,
    SolverOptions,
    double_well_program,
    finite_diff_gradient,
    multistart,
    solve,
)


def _program(n, objective, constraints=None, n_con=0, lo=-10.0, hi=10.0):
    return NlpProgram(
        n_var=n,
        lower=np.full(n, lo),
        upper=np.full(n, hi),
        objective=objective,
        constraints=constraints,
        n_con=n_con,
    )


class TestFiniteDiff:
    def test_quadratic(self):
        g = finite_diff_gradient(lambda x: float(x[0] ** 2), np.array([3.0]))
        assert g[0] == pytest.approx(6.0, abs=1e-6)

    def test_constant(self):
        g = finite_diff_gradient(lambda x: 1.5, np.array([0.3, -2.0]))
        np.testing.assert_array_equal(g, [0.0, 0.0])

    def test_bilinear(self):
        g = finite_diff_gradient(lambda x: float(x[0] * x[1]), np.array([2.0, 3.0]))
        np.testing.assert_allclose(g, [3.0, 2.0], atol=1e-6)

    def test_evaluation_count_is_2dim(self):
        calls = []

        def f(x):
            calls.append(x.copy())
            return float(np.sum(x**2))

        finite_diff_gradient(f, np.zeros(5))
        assert len(calls) == 10

    def test_non_finite_reports_component(self):
        def f(x):
            return float("nan") if x[1] > 0.5 else 0.0

        with pytest.raises(ValueError, match="component 1"):
            finite_diff_gradient(f, np.array([0.0, 0.5]))


class TestSolve:
    def test_unconstrained_quadratic(self):
        prog = _program(1, lambda x: float((x[0] - 2.0) ** 2))
        sol = solve(prog, np.array([0.0]))
        assert sol.status == "converged"
        assert sol.x[0] == pytest.approx(2.0, abs=1e-6)
        assert sol.objective == pytest.approx(0.0, abs=1e-6)

    def test_active_constraint(self):
        prog = _program(1, lambda x: float(x[0]), lambda x: np.array([1.0 - x[0]]), 1)
        sol = solve(prog, np.array([5.0]))
        assert sol.status == "converged"
        assert sol.x[0] == pytest.approx(1.0, abs=1e-5)

    def test_contradictory_constraints(self):
        prog = _program(
            1,
            lambda x: float(x[0]),
            lambda x: np.array([x[0], 1.0 - x[0]]),
            2,
        )
        sol = solve(prog, np.array([5.0]), SolverOptions(max_outer=25))
        assert sol.status == "infeasible-point"
        assert sol.max_violation >= 0.5 - 1e-9

    def test_start_projected_into_bounds(self):
        prog = _program(1, lambda x: float(x[0] ** 2), lo=1.0, hi=3.0)
        sol = solve(prog, np.array([100.0]))
        assert sol.x[0] == pytest.approx(1.0, abs=1e-8)

    def test_invalid_start_raises(self):
        prog = _program(1, lambda x: float("inf"))
        with pytest.raises(InvalidStartError):
            solve(prog, np.array([0.0]))

    def test_nonsmooth_max_composition(self):
        prog = _program(1, lambda x: float(max(x[0], -x[0])))
        sol = solve(prog, np.array([1.7]))
        assert abs(sol.x[0]) <= 1e-4

    def test_feasibility_contract(self):
        prog = _program(
            2,
            lambda x: float((x[0] - 1) ** 2 + (x[1] + 2) ** 2),
            lambda x: np.array([x[0] + x[1] - 0.5]),
            1,
        )
        sol = solve(prog, np.array([3.0, 3.0]))
        assert sol.status == "converged"
        assert sol.max_violation <= SolverOptions().constraint_tol

    def test_deterministic(self):
        prog = _program(
            2,
            lambda x: float((x[0] - 1) ** 2 + x[1] ** 2 + 0.1 * np.sin(3 * x[0])),
            lambda x: np.array([0.3 - x[0]]),
            1,
        )
        a = solve(prog, np.array([2.0, 2.0]))
        b = solve(prog, np.array([2.0, 2.0]))
        np.testing.assert_array_equal(a.x, b.x)
        assert (a.objective, a.max_violation, a.status, a.n_iter, a.n_eval) == (
            b.objective,
            b.max_violation,
            b.status,
            b.n_iter,
            b.n_eval,
        )


def _kkt_oracle(H, c, A, b):
    """Exact QP solution by enumerating candidate active sets."""
    m = A.shape[0]
    best = None
    for r in range(m + 1):
        for S in itertools.combinations(range(m), r):
            S = list(S)
            n = H.shape[0]
            K = np.block([[H, A[S].T], [A[S], np.zeros((len(S), len(S)))]])
            rhs = np.concatenate([-c, b[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, mu = sol[:n], sol[n:]
            if np.any(mu < -1e-10):
                continue
            if np.any(A @ x - b > 1e-10):
                continue
            J = 0.5 * x @ H @ x + c @ x
            if best is None or J < best[0]:
                best = (J, x)
    return best


class TestConvexQP:
    def test_matches_kkt_closed_form(self):
        rng = np.random.default_rng(2027)
        solved = 0
        for _ in range(20):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(1, 4))
            B = rng.normal(size=(n, n))
            H = B @ B.T + n * np.eye(n)
            c = rng.normal(size=n)
            A = rng.normal(size=(m, n))
            b = rng.uniform(-0.5, 1.0, size=m)
            oracle = _kkt_oracle(H, c, A, b)
            if oracle is None:
                continue
            J_star, x_star = oracle
            prog = _program(
                n,
                lambda x, H=H, c=c: float(0.5 * x @ H @ x + c @ x),
                lambda x, A=A, b=b: A @ x - b,
                m,
            )
            sol = solve(prog, np.zeros(n), SolverOptions(max_outer=60))
            assert sol.status == "converged"
            np.testing.assert_allclose(sol.x, x_star, atol=1e-5)
            assert sol.objective == pytest.approx(J_star, abs=1e-5)
            solved += 1
        assert solved >= 15  # random instances are almost always feasible


class TestMultistart:
    def test_k1_equals_solve_from_center(self):
        prog = _program(2, lambda x: float(np.sum((x - 1.0) ** 2)))
        direct = solve(prog, np.array([0.0, 0.0]))
        ms = multistart(prog, SolverOptions(multistart=1))
        np.testing.assert_array_equal(ms.x, direct.x)

    def test_bimodal_finds_global_basin(self):
        # center start (x=1) sits in the local basin; multistart must escape
        prog = double_well_program(lo=-2.0, hi=4.0)
        xs = np.linspace(-2, 4, 20001)
        vals = (xs**2 - 1.0) ** 2 + 0.3 * xs
        x_grid = xs[np.argmin(vals)]  # grid-search oracle
        single = multistart(prog, SolverOptions(multistart=1))
        assert single.x[0] > 0  # trapped in local basin
        best = multistart(prog, SolverOptions(multistart=8, seed=3))
        assert best.x[0] == pytest.approx(x_grid, abs=1e-3)

    def test_all_infeasible_fallback(self):
        prog = _program(
            1,
            lambda x: float(x[0] ** 2),
            lambda x: np.array([x[0] - 20.0, -x[0] - 20.0]),  # |x| >= ... impossible in box
            2,
            lo=-1.0,
            hi=1.0,
        )
        # constraints demand x >= 20 and x <= -20 simultaneously
        prog = _program(
            1,
            lambda x: float(x[0] ** 2),
            lambda x: np.array([20.0 - x[0], 20.0 + x[0]]),
            2,
            lo=-1.0,
            hi=1.0,
        )
        sol = multistart(prog, SolverOptions(multistart=3, max_outer=8))
        assert sol.status == "infeasible-point"
        assert sol.max_violation >= 19.0

    def test_deterministic_multistart(self):
        prog = double_well_program()
        a = multistart(prog, SolverOptions(multistart=5, seed=11))
        b = multistart(prog, SolverOptions(multistart=5, seed=11))
        np.testing.assert_array_equal(a.x, b.x)
        assert a.objective == b.objective


class TestOptionsValidation:
    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            SolverOptions(constraint_tol=0.0)

    def test_bad_multistart(self):
        with pytest.raises(ValueError):
            SolverOptions(multistart=0)

    def test_log_trace_written(self, tmp_path):
        log = tmp_path / "trace.log"
        prog = _program(1, lambda x: float(x[0] ** 2), lambda x: np.array([0.5 - x[0]]), 1)
        solve(prog, np.array([2.0]), SolverOptions(log_path=str(log)))
        lines = log.read_text().strip().splitlines()
        assert len(lines) >= 1
        assert all(len(line.split(",")) == 3 for line in lines)

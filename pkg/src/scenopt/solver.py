"""General-purpose smooth constrained minimizer over box-bounded variables.

Programs are canonical: minimize f(x) subject to g_j(x) <= 0 and box
bounds.  The solver runs an augmented-Lagrangian outer loop around a
quasi-Newton box-constrained inner minimizer (L-BFGS-B), with gradients by
central finite differences.  No analytic derivatives are required, which
matches the implicit, simulation-backed requirement functions this toolkit
is built for; the mild nonsmoothness of quantile kinks and max-compositions
is tolerated by the finite-difference smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import InvalidStartError

_PENALTY_CAP = 1e12


@dataclass(frozen=True)
class SolverOptions:
    max_outer: int = 50
    constraint_tol: float = 1e-6
    objective_tol: float = 1e-8
    fd_step: float = 1e-6
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    inner_maxiter: int = 500
    multistart: int = 1
    seed: int = 0
    log_path: str | None = None

    def __post_init__(self):
        if min(self.constraint_tol, self.objective_tol, self.fd_step) <= 0:
            raise ValueError("tolerances must be positive")
        if self.multistart < 1:
            raise ValueError("multistart must be >= 1")


@dataclass(frozen=True)
class NlpProgram:
    """A box-bounded program with inequality constraints g(x) <= 0.

    ``constraints`` returns all n_con constraint values as one vector.
    ``blocks`` maps variable-block names (theta, xi, zeta, lam) back to
    slices of x; ``start`` builds a full start vector from a theta block,
    applying the slack-initialization rule of the source formulation.
    """

    n_var: int
    lower: np.ndarray
    upper: np.ndarray
    objective: Callable[[np.ndarray], float]
    constraints: Callable[[np.ndarray], np.ndarray] | None
    n_con: int
    blocks: dict = field(default_factory=dict)
    start: Callable[[np.ndarray], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def theta_slice(self) -> slice:
        return self.blocks.get("theta", slice(0, self.n_var))

    def eval_constraints(self, x: np.ndarray) -> np.ndarray:
        if self.constraints is None or self.n_con == 0:
            return np.empty(0)
        return np.asarray(self.constraints(x), dtype=float)


@dataclass(frozen=True)
class NlpSolution:
    x: np.ndarray
    objective: float
    max_violation: float
    status: str  # converged | max-iter | infeasible-point
    n_iter: int
    n_eval: int

    @property
    def feasible(self) -> bool:
        return self.status == "converged"


def finite_diff_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with component-relative steps.

    h_j = step * max(1, |x_j|); costs exactly 2 * dim evaluations of f.
    """
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        hi, lo = f(x + e), f(x - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"non-finite function value in finite difference for component {j}")
        grad[j] = (hi - lo) / (2.0 * h)
    return grad


def _bounds_pairs(lower: np.ndarray, upper: np.ndarray) -> list[tuple[float | None, float | None]]:
    return [
        (lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
        for lo, hi in zip(lower, upper)
    ]


def _project(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.clip(x, lower, upper)


class _Counter:
    __slots__ = ("calls",)

    def __init__(self):
        self.calls = 0


def solve(program: NlpProgram, x0: np.ndarray, options: SolverOptions | None = None) -> NlpSolution:
    """Minimize the program from one start point.

    Returns the best feasible point found (lowest objective among outer
    iterates within constraint tolerance); if no iterate is feasible the
    least-violating point is returned with status ``infeasible-point``.
    Deterministic for fixed (program, x0, options).
    """
    options = options or SolverOptions()
    lower = np.asarray(program.lower, dtype=float)
    upper = np.asarray(program.upper, dtype=float)
    x = _project(np.asarray(x0, dtype=float).copy(), lower, upper)

    counter = _Counter()

    def fval(z: np.ndarray) -> float:
        counter.calls += 1
        return float(program.objective(z))

    def gval(z: np.ndarray) -> np.ndarray:
        return program.eval_constraints(z)

    f0, g0 = fval(x), gval(x)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise InvalidStartError("objective or constraint non-finite at start point")

    n_con = g0.size
    lam = np.zeros(n_con)
    rho = options.penalty_init
    bounds = _bounds_pairs(lower, upper)
    log_lines: list[str] = []

    def augmented(z: np.ndarray) -> float:
        val = fval(z)
        if n_con:
            shifted = np.maximum(0.0, lam + rho * gval(z))
            val += float(np.sum(shifted**2 - lam**2)) / (2.0 * rho)
        return val

    def augmented_grad(z: np.ndarray) -> np.ndarray:
        return finite_diff_gradient(augmented, z, options.fd_step)

    best_feasible: tuple[float, np.ndarray, float] | None = None  # (J, x, viol)
    least_violating: tuple[float, np.ndarray, float] | None = None  # (viol, x, J)
    prev_feasible_obj: float | None = None
    prev_viol = np.inf
    status = "max-iter"
    outer = 0

    for outer in range(1, options.max_outer + 1):
        # loose inner tolerances while multipliers are far off, tight at the end
        gtol = max(1e-12, 1e-5 * 0.1 ** (outer - 1))
        ftol = max(1e-16, 1e-11 * 0.1 ** (outer - 1))
        # quantile kinks and max-compositions abort L-BFGS-B line searches;
        # restarting with a fresh Hessian memory usually steps past the kink
        for _ in range(4):
            res = _scipy_minimize(
                augmented,
                x,
                jac=augmented_grad,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": options.inner_maxiter, "ftol": ftol, "gtol": gtol},
            )
            moved = float(np.max(np.abs(res.x - x))) if res.nit else 0.0
            x = _project(res.x, lower, upper)
            if res.status == 0 or moved <= 1e-14:
                break
        g = gval(x)
        obj = fval(x)
        viol = float(np.max(np.maximum(0.0, g))) if n_con else 0.0
        log_lines.append(f"{outer},{obj:.12g},{viol:.6g}")

        if viol <= options.constraint_tol:
            if best_feasible is None or obj < best_feasible[0]:
                best_feasible = (obj, x.copy(), viol)
            if n_con == 0:
                status = "converged"
                break
            if prev_feasible_obj is not None and abs(obj - prev_feasible_obj) <= options.objective_tol * max(
                1.0, abs(obj)
            ):
                status = "converged"
                break
            prev_feasible_obj = obj
        if least_violating is None or viol < least_violating[0]:
            least_violating = (viol, x.copy(), obj)

        if n_con:
            lam = np.maximum(0.0, lam + rho * g)
            if viol > 0.25 * prev_viol and rho < _PENALTY_CAP:
                rho = min(rho * options.penalty_growth, _PENALTY_CAP)
            prev_viol = viol

    if options.log_path:
        with open(options.log_path, "a", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")

    if best_feasible is not None:
        obj, xb, viol = best_feasible
        return NlpSolution(xb, obj, viol, status if status == "converged" else "max-iter", outer, counter.calls)
    viol, xb, obj = least_violating
    return NlpSolution(xb, obj, viol, "infeasible-point", outer, counter.calls)


def multistart(
    program: NlpProgram,
    options: SolverOptions | None = None,
    starts: list[np.ndarray] | None = None,
) -> NlpSolution:
    """Run :func:`solve` from seeded starts and keep the best outcome.

    The first start is the box center; the rest are uniform in the box
    (theta block only when the program carries a slack initializer).
    Callers with problem knowledge can prepend their own theta starts via
    ``starts``.  The feasible solution with the lowest objective wins; if
    every start ends infeasible the least-violating one is returned.
    """
    options = options or SolverOptions()
    theta_sl = program.theta_slice()
    lo = np.asarray(program.lower, dtype=float)[theta_sl]
    hi = np.asarray(program.upper, dtype=float)[theta_sl]
    lo_s = np.where(np.isfinite(lo), lo, -10.0)
    hi_s = np.where(np.isfinite(hi), hi, 10.0)

    rng = np.random.default_rng(np.random.SeedSequence(options.seed, spawn_key=(7001,)))
    starts = [np.asarray(s, dtype=float) for s in (starts or [])]
    starts.append(0.5 * (lo_s + hi_s))
    for _ in range(options.multistart - 1):
        starts.append(rng.uniform(lo_s, hi_s))

    best: NlpSolution | None = None
    total_eval = 0
    for theta0 in starts:
        if program.start is not None:
            x0 = program.start(theta0)
        elif theta_sl == slice(0, program.n_var):
            x0 = theta0
        else:
            x0 = np.zeros(program.n_var)
            x0[theta_sl] = theta0
        sol = solve(program, x0, options)
        total_eval += sol.n_eval
        if best is None:
            best = sol
        elif sol.feasible and not best.feasible:
            best = sol
        elif sol.feasible == best.feasible:
            if sol.feasible and sol.objective < best.objective:
                best = sol
            if not sol.feasible and sol.max_violation < best.max_violation:
                best = sol
    return replace(best, n_eval=total_eval)


def double_well(x: np.ndarray) -> float:
    """1-D bimodal test objective: global basin near -1, local basin near +1."""
    v = float(np.asarray(x).ravel()[0])
    return (v**2 - 1.0) ** 2 + 0.3 * v


def double_well_program(lo: float = -2.0, hi: float = 2.0) -> NlpProgram:
    return NlpProgram(
        n_var=1,
        lower=np.array([lo]),
        upper=np.array([hi]),
        objective=double_well,
        constraints=None,
        n_con=0,
    )

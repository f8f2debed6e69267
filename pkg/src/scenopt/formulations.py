"""Compile design problems and scenario datasets into solvable programs.

Seven program families are supported.  The risk-averse ones penalize slack
variables measuring how badly outliers violate the requirements; the
risk-agnostic ones drop a prescribed fraction of scenarios through quantile
truncation.  Every chance constraint is an inverse empirical CDF of
per-scenario requirement values, so all programs stay smooth enough for the
finite-difference solver.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .ecdf import SortedSample, ecdf_eval, prepare_values, quantile_prepared
from .errors import ConfigurationError
from .problems import DesignProblem
from .scenarios import MultiPointDataset
from .solver import NlpProgram, SolverOptions, multistart

RISK_AVERSE_SCENARIO = "risk-averse-scenario"
WORST_CASE = "worst-case"
RISK_AVERSE_REQUIREMENT = "risk-averse-requirement"
RISK_AGNOSTIC_SCENARIO = "risk-agnostic-scenario"
RISK_AGNOSTIC_REQUIREMENT = "risk-agnostic-requirement"
MOMENT_RISK_AVERSE = "moment-risk-averse"
MOMENT_RISK_AGNOSTIC = "moment-risk-agnostic"

KINDS = (
    RISK_AVERSE_SCENARIO,
    WORST_CASE,
    RISK_AVERSE_REQUIREMENT,
    RISK_AGNOSTIC_SCENARIO,
    RISK_AGNOSTIC_REQUIREMENT,
    MOMENT_RISK_AVERSE,
    MOMENT_RISK_AGNOSTIC,
)


@dataclass(frozen=True)
class FormulationSpec:
    """Which program to build and its relaxation parameters.

    rho: penalty weight(s) for risk-averse slacks (scalar, or one per
    requirement for the requirement-based program).  gamma: minimally
    acceptable per-requirement success probability in (0, 1].  alpha:
    fraction of scenarios treated as outliers, in [0, 1).  kappa >= 1 sets
    how sharply moment weights cut off outliers.
    """

    kind: str
    rho: float | np.ndarray | None = None
    gamma: float | np.ndarray | None = None
    alpha: float | np.ndarray | None = None
    kappa: float = 5.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown formulation kind {self.kind!r}")


def _gamma_vector(spec: FormulationSpec, n_r: int) -> np.ndarray:
    if spec.gamma is None:
        raise ConfigurationError(f"{spec.kind} requires gamma")
    g = np.broadcast_to(np.asarray(spec.gamma, dtype=float), (n_r,)).copy()
    if np.any(g <= 0.0) or np.any(g > 1.0):
        raise ConfigurationError("gamma entries must lie in (0, 1]")
    return g


def _alpha_scalar(spec: FormulationSpec) -> float:
    if spec.alpha is None:
        raise ConfigurationError(f"{spec.kind} requires alpha")
    a = float(np.asarray(spec.alpha).ravel()[0]) if np.ndim(spec.alpha) else float(spec.alpha)
    if np.ndim(spec.alpha) and np.asarray(spec.alpha).size != 1:
        raise ConfigurationError("alpha must be a scalar for this formulation")
    if not 0.0 <= a < 1.0:
        raise ConfigurationError("alpha must lie in [0, 1)")
    return a


def _alpha_vector(spec: FormulationSpec, n_r: int) -> np.ndarray:
    if spec.alpha is None:
        raise ConfigurationError(f"{spec.kind} requires alpha")
    a = np.asarray(spec.alpha, dtype=float)
    if a.ndim == 0:
        a = np.broadcast_to(a, (n_r,)).copy()
    if a.shape != (n_r,):
        raise ConfigurationError(f"alpha must have one entry per requirement ({n_r})")
    if np.any(a < 0.0) or np.any(a >= 1.0):
        raise ConfigurationError("alpha entries must lie in [0, 1)")
    return a


def _rho_scalar(spec: FormulationSpec) -> float:
    if spec.rho is None:
        raise ConfigurationError(f"{spec.kind} requires rho")
    r = np.asarray(spec.rho, dtype=float)
    if r.size != 1:
        raise ConfigurationError("rho must be a scalar for this formulation")
    r = float(r.ravel()[0])
    if r < 0:
        raise ConfigurationError("rho must be >= 0")
    return r


def _rho_vector(spec: FormulationSpec, n_r: int) -> np.ndarray:
    if spec.rho is None:
        raise ConfigurationError(f"{spec.kind} requires rho")
    r = np.asarray(spec.rho, dtype=float)
    if r.ndim == 0:
        r = np.broadcast_to(r, (n_r,)).copy()
    if r.shape != (n_r,):
        raise ConfigurationError(f"rho must have one entry per requirement ({n_r})")
    if np.any(r < 0):
        raise ConfigurationError("rho entries must be >= 0")
    return r


class ScenarioQuantiles:
    """Per-scenario requirement quantiles over a multi-point dataset.

    Scenarios are grouped by cloud size so that datasets mixing perturbed
    and unperturbed scenarios evaluate in a few vectorized passes.
    """

    def __init__(self, problem: DesignProblem, dataset: MultiPointDataset):
        self.problem = problem
        self.dataset = dataset
        self.n = dataset.n
        counts = dataset.counts
        self.groups: list[tuple[int, np.ndarray, np.ndarray]] = []
        for m in np.unique(counts):
            idx = np.where(counts == m)[0]
            flat = np.concatenate([dataset.points[i] for i in idx], axis=0)
            self.groups.append((int(m), idx, flat))

    def raw_values(self, theta: np.ndarray):
        """Yield (indices, values (n_g, m, n_r)) per cloud-size group."""
        for m, idx, flat in self.groups:
            vals = self.problem.requirements(theta, flat).reshape(idx.size, m, self.problem.n_r)
            yield idx, vals

    def quantiles(self, theta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """Gamma_k-quantile of each requirement over each cloud: (n, n_r)."""
        n_r = self.problem.n_r
        out = np.empty((self.n, n_r))
        for idx, vals in self.raw_values(theta):
            m = vals.shape[1]
            if m == 1:
                out[idx] = vals[:, 0, :]
                continue
            prepared = prepare_values(np.swapaxes(vals, 1, 2))  # (n_g, n_r, m)
            for k in range(n_r):
                out[idx, k] = quantile_prepared(prepared[:, k, :], float(gamma[k]))
        return out

    def response_means(self, theta: np.ndarray) -> np.ndarray:
        """Mean response over each scenario's cloud: (n,)."""
        if self.problem.response is None:
            raise ConfigurationError("problem defines no response function")
        out = np.empty(self.n)
        for m, idx, flat in self.groups:
            out[idx] = self.problem.response(theta, flat).reshape(idx.size, m).mean(axis=1)
        return out


def _design_constraint_parts(problem: DesignProblem, theta: np.ndarray) -> np.ndarray:
    if problem.design_constraints is None:
        return np.empty(0)
    return np.asarray(problem.design_constraints(theta), dtype=float)


def _meta(problem, dataset, spec, n_scen_con):
    return {
        "kind": spec.kind,
        "problem": problem.name,
        "n": dataset.n,
        "m": dataset.uniform_m,
        "n_scenario_constraints": n_scen_con,
        "n_design_constraints": problem.n_design_constraints,
    }


def build_risk_averse_scenario(
    problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec
) -> NlpProgram:
    """min J(theta) + rho * sum(xi) s.t. per-scenario gamma_k-quantiles <= xi_i."""
    rho = _rho_scalar(spec)
    gamma = _gamma_vector(spec, problem.n_r)
    engine = ScenarioQuantiles(problem, dataset)
    n, n_t = dataset.n, problem.n_theta
    t_sl, xi_sl = slice(0, n_t), slice(n_t, n_t + n)

    def objective(x):
        return problem.objective(x[t_sl]) + rho * float(np.sum(x[xi_sl]))

    def constraints(x):
        q = engine.quantiles(x[t_sl], gamma)
        scen = (q - x[xi_sl][:, None]).ravel()
        return np.concatenate([scen, _design_constraint_parts(problem, x[t_sl])])

    def start(theta0):
        q = engine.quantiles(theta0, gamma)
        xi0 = np.maximum(0.0, q.max(axis=1))
        return np.concatenate([theta0, xi0])

    n_con = n * problem.n_r + problem.n_design_constraints
    return NlpProgram(
        n_var=n_t + n,
        lower=np.concatenate([problem.lower, np.zeros(n)]),
        upper=np.concatenate([problem.upper, np.full(n, np.inf)]),
        objective=objective,
        constraints=constraints,
        n_con=n_con,
        blocks={"theta": t_sl, "xi": xi_sl},
        start=start,
        meta=_meta(problem, dataset, spec, n * problem.n_r),
    )


def build_worst_case(problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec) -> NlpProgram:
    """min J(theta) + rho * sum(xi) s.t. r_k(theta, delta^(i,j)) <= xi_i for all i, j, k."""
    rho = _rho_scalar(spec)
    engine = ScenarioQuantiles(problem, dataset)
    n, n_t = dataset.n, problem.n_theta
    t_sl, xi_sl = slice(0, n_t), slice(n_t, n_t + n)
    n_raw = int(np.sum(dataset.counts)) * problem.n_r

    def objective(x):
        return problem.objective(x[t_sl]) + rho * float(np.sum(x[xi_sl]))

    def constraints(x):
        xi = x[xi_sl]
        parts = [
            (vals - xi[idx][:, None, None]).ravel() for idx, vals in engine.raw_values(x[t_sl])
        ]
        parts.append(_design_constraint_parts(problem, x[t_sl]))
        return np.concatenate(parts)

    def start(theta0):
        xi0 = np.zeros(n)
        for idx, vals in engine.raw_values(theta0):
            xi0[idx] = np.maximum(0.0, vals.max(axis=(1, 2)))
        return np.concatenate([theta0, xi0])

    return NlpProgram(
        n_var=n_t + n,
        lower=np.concatenate([problem.lower, np.zeros(n)]),
        upper=np.concatenate([problem.upper, np.full(n, np.inf)]),
        objective=objective,
        constraints=constraints,
        n_con=n_raw + problem.n_design_constraints,
        blocks={"theta": t_sl, "xi": xi_sl},
        start=start,
        meta=_meta(problem, dataset, spec, n_raw),
    )


def build_risk_averse_requirement(
    problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec
) -> NlpProgram:
    """min J(theta) + rho . zeta s.t. the (1 - zeta_k)-quantile of the
    per-scenario gamma_k-quantiles is nonpositive, one constraint per
    requirement; sizes depend on n_r, not n."""
    rho = _rho_vector(spec, problem.n_r)
    gamma = _gamma_vector(spec, problem.n_r)
    engine = ScenarioQuantiles(problem, dataset)
    n_t, n_r = problem.n_theta, problem.n_r
    t_sl, z_sl = slice(0, n_t), slice(n_t, n_t + n_r)

    def objective(x):
        return problem.objective(x[t_sl]) + float(rho @ x[z_sl])

    def constraints(x):
        q = engine.quantiles(x[t_sl], gamma)  # (n, n_r)
        prepared = prepare_values(q.T)  # (n_r, n)
        vals = np.array(
            [quantile_prepared(prepared[k], 1.0 - float(x[z_sl][k])) for k in range(n_r)]
        )
        return np.concatenate([vals, _design_constraint_parts(problem, x[t_sl])])

    def start(theta0):
        q = engine.quantiles(theta0, gamma)
        zeta0 = np.empty(n_r)
        for k in range(n_r):
            sample = SortedSample(prepare_values(q[:, k]))
            zeta0[k] = min(1.0, max(0.0, 1.0 - ecdf_eval(sample, 0.0)))
        return np.concatenate([theta0, zeta0])

    return NlpProgram(
        n_var=n_t + n_r,
        lower=np.concatenate([problem.lower, np.zeros(n_r)]),
        upper=np.concatenate([problem.upper, np.ones(n_r)]),
        objective=objective,
        constraints=constraints,
        n_con=n_r + problem.n_design_constraints,
        blocks={"theta": t_sl, "zeta": z_sl},
        start=start,
        meta=_meta(problem, dataset, spec, n_r),
    )


def build_risk_agnostic_scenario(
    problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec
) -> NlpProgram:
    """min J(theta) s.t. the (1 - alpha)-quantile of the worst per-scenario
    quantiles is nonpositive; theta is the only variable."""
    alpha = _alpha_scalar(spec)
    gamma = _gamma_vector(spec, problem.n_r)
    engine = ScenarioQuantiles(problem, dataset)
    t_sl = slice(0, problem.n_theta)

    def constraints(x):
        z = engine.quantiles(x[t_sl], gamma).max(axis=1)
        val = quantile_prepared(prepare_values(z), 1.0 - alpha)
        return np.concatenate([[val], _design_constraint_parts(problem, x[t_sl])])

    return NlpProgram(
        n_var=problem.n_theta,
        lower=problem.lower.copy(),
        upper=problem.upper.copy(),
        objective=lambda x: problem.objective(x[t_sl]),
        constraints=constraints,
        n_con=1 + problem.n_design_constraints,
        blocks={"theta": t_sl},
        start=lambda theta0: np.asarray(theta0, dtype=float).copy(),
        meta=_meta(problem, dataset, spec, 1),
    )


def build_risk_agnostic_requirement(
    problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec
) -> NlpProgram:
    """min J(theta) s.t. the (1 - alpha_k)-quantile of each requirement's
    per-scenario quantiles is nonpositive, one constraint per requirement."""
    alpha = _alpha_vector(spec, problem.n_r)
    gamma = _gamma_vector(spec, problem.n_r)
    engine = ScenarioQuantiles(problem, dataset)
    t_sl = slice(0, problem.n_theta)
    n_r = problem.n_r

    def constraints(x):
        q = engine.quantiles(x[t_sl], gamma)
        prepared = prepare_values(q.T)
        vals = np.array(
            [quantile_prepared(prepared[k], 1.0 - float(alpha[k])) for k in range(n_r)]
        )
        return np.concatenate([vals, _design_constraint_parts(problem, x[t_sl])])

    return NlpProgram(
        n_var=problem.n_theta,
        lower=problem.lower.copy(),
        upper=problem.upper.copy(),
        objective=lambda x: problem.objective(x[t_sl]),
        constraints=constraints,
        n_con=n_r + problem.n_design_constraints,
        blocks={"theta": t_sl},
        start=lambda theta0: np.asarray(theta0, dtype=float).copy(),
        meta=_meta(problem, dataset, spec, n_r),
    )


def weighted_mean(
    response: Callable[[np.ndarray, np.ndarray], np.ndarray],
    dataset: MultiPointDataset,
    weights: np.ndarray,
    theta: np.ndarray,
) -> float:
    """Weighted empirical mean of the response over all cloud points:
    sum_i w_i sum_j h(theta, delta^(i,j)) / sum_i w_i m_i."""
    if response is None:
        raise ConfigurationError("problem defines no response function")
    w = np.asarray(weights, dtype=float)
    if w.shape != (dataset.n,):
        raise ConfigurationError(f"need one weight per scenario ({dataset.n})")
    if np.any(w < 0) or not np.any(w > 0):
        raise ConfigurationError("weights must be nonnegative with positive total")
    total = 0.0
    for i, pts in enumerate(dataset.points):
        if w[i] != 0.0:
            total += w[i] * float(np.sum(response(theta, pts)))
    return total / float(np.sum(w * dataset.counts))


def build_moment_risk_averse(
    problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec
) -> NlpProgram:
    """min lambda + rho * sum(xi) s.t. quantile constraints as in the
    risk-averse scenario program plus the exp(-kappa xi)-weighted response
    mean <= lambda."""
    if problem.response is None:
        raise ConfigurationError("moment formulations require a response function")
    rho = _rho_scalar(spec)
    gamma = _gamma_vector(spec, problem.n_r)
    if spec.kappa < 1.0:
        raise ConfigurationError("kappa must be >= 1")
    kappa = float(spec.kappa)
    engine = ScenarioQuantiles(problem, dataset)
    n, n_t = dataset.n, problem.n_theta
    t_sl = slice(0, n_t)
    l_sl = slice(n_t, n_t + 1)
    xi_sl = slice(n_t + 1, n_t + 1 + n)
    counts = dataset.counts.astype(float)

    def weighted(theta, xi):
        w = np.exp(-kappa * np.maximum(xi, 0.0))
        means = engine.response_means(theta)  # per-scenario cloud means
        return float(np.sum(w * counts * means) / np.sum(w * counts))

    def objective(x):
        return float(x[l_sl][0]) + rho * float(np.sum(x[xi_sl]))

    def constraints(x):
        theta, lam, xi = x[t_sl], float(x[l_sl][0]), x[xi_sl]
        q = engine.quantiles(theta, gamma)
        scen = (q - xi[:, None]).ravel()
        mom = weighted(theta, xi) - lam
        return np.concatenate([scen, [mom], _design_constraint_parts(problem, theta)])

    def start(theta0):
        q = engine.quantiles(theta0, gamma)
        xi0 = np.maximum(0.0, q.max(axis=1))
        lam0 = weighted(theta0, xi0)
        return np.concatenate([theta0, [lam0], xi0])

    n_con = n * problem.n_r + 1 + problem.n_design_constraints
    return NlpProgram(
        n_var=n_t + 1 + n,
        lower=np.concatenate([problem.lower, [-np.inf], np.zeros(n)]),
        upper=np.concatenate([problem.upper, [np.inf], np.full(n, np.inf)]),
        objective=objective,
        constraints=constraints,
        n_con=n_con,
        blocks={"theta": t_sl, "lam": l_sl, "xi": xi_sl},
        start=start,
        meta=_meta(problem, dataset, spec, n * problem.n_r + 1),
    )


def build_moment_risk_agnostic(
    problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec
) -> NlpProgram:
    """min lambda s.t. the (1 - alpha)-quantile of E is nonpositive, where
    E_i combines the mean of the i lowest per-scenario response means with
    scenario i's requirement quantiles; the shared max drops the same
    scenarios from the moment and the requirement constraints."""
    if problem.response is None:
        raise ConfigurationError("moment formulations require a response function")
    alpha = _alpha_scalar(spec)
    gamma = _gamma_vector(spec, problem.n_r) if problem.n_r else np.empty(0)
    engine = ScenarioQuantiles(problem, dataset)
    n, n_t = dataset.n, problem.n_theta
    t_sl = slice(0, n_t)
    l_sl = slice(n_t, n_t + 1)

    def envelope(theta, lam):
        means = engine.response_means(theta)
        order = np.sort(means)
        cum_means = np.cumsum(order) / np.arange(1, n + 1)  # mean of i lowest
        e = cum_means - lam
        if problem.n_r:
            q = engine.quantiles(theta, gamma)  # (n, n_r), original scenario order
            e = np.maximum(e, q.max(axis=1))
        return e

    def constraints(x):
        val = quantile_prepared(prepare_values(envelope(x[t_sl], float(x[l_sl][0]))), 1.0 - alpha)
        return np.concatenate([[val], _design_constraint_parts(problem, x[t_sl])])

    def start(theta0):
        lam0 = float(np.mean(engine.response_means(theta0)))
        return np.concatenate([theta0, [lam0]])

    return NlpProgram(
        n_var=n_t + 1,
        lower=np.concatenate([problem.lower, [-np.inf]]),
        upper=np.concatenate([problem.upper, [np.inf]]),
        objective=lambda x: float(x[l_sl][0]),
        constraints=constraints,
        n_con=1 + problem.n_design_constraints,
        blocks={"theta": t_sl, "lam": l_sl},
        start=start,
        meta=_meta(problem, dataset, spec, 1),
    )


_BUILDERS = {
    RISK_AVERSE_SCENARIO: build_risk_averse_scenario,
    WORST_CASE: build_worst_case,
    RISK_AVERSE_REQUIREMENT: build_risk_averse_requirement,
    RISK_AGNOSTIC_SCENARIO: build_risk_agnostic_scenario,
    RISK_AGNOSTIC_REQUIREMENT: build_risk_agnostic_requirement,
    MOMENT_RISK_AVERSE: build_moment_risk_averse,
    MOMENT_RISK_AGNOSTIC: build_moment_risk_agnostic,
}


def build(problem: DesignProblem, dataset: MultiPointDataset, spec: FormulationSpec) -> NlpProgram:
    """Dispatch to the builder for spec.kind."""
    return _BUILDERS[spec.kind](problem, dataset, spec)


@dataclass(frozen=True)
class OutlierReport:
    """Scenario partition at a design: outliers have a positive worst
    per-requirement quantile and are optimally excluded from feasibility."""

    outliers: np.ndarray
    inliers: np.ndarray
    count: int
    worst_quantiles: np.ndarray

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "worst_quantile", "is_outlier"])
            flags = np.zeros(self.worst_quantiles.size, dtype=int)
            flags[self.outliers] = 1
            for i, (wq, fl) in enumerate(zip(self.worst_quantiles, flags)):
                writer.writerow([i, f"{wq:.12g}", fl])


def extract_outliers(
    problem: DesignProblem,
    dataset: MultiPointDataset,
    theta: np.ndarray,
    gamma: float | np.ndarray,
) -> OutlierReport:
    """Scenarios whose worst gamma_k-quantile is positive at this design."""
    gamma_vec = np.broadcast_to(np.asarray(gamma, dtype=float), (problem.n_r,))
    engine = ScenarioQuantiles(problem, dataset)
    worst = engine.quantiles(np.asarray(theta, dtype=float), gamma_vec).max(axis=1)
    outliers = np.where(worst > 0.0)[0]
    inliers = np.where(worst <= 0.0)[0]
    return OutlierReport(outliers, inliers, int(outliers.size), worst)


def max_feasible_alpha(
    problem: DesignProblem,
    dataset: MultiPointDataset,
    gamma: float | np.ndarray,
    options: SolverOptions | None = None,
    rho: float = 1e4,
) -> float:
    """Smallest achievable outlier fraction sigma/n over the dataset.

    Solves the risk-averse scenario program with the objective replaced by
    the pure slack penalty (J = 0, large rho), then counts outliers; any
    alpha at or above the returned value keeps the risk-agnostic scenario
    program feasible up to solver tolerance.
    """
    relaxed = DesignProblem(
        name=problem.name + "-feasibility",
        n_theta=problem.n_theta,
        n_delta=problem.n_delta,
        n_r=problem.n_r,
        lower=problem.lower,
        upper=problem.upper,
        objective=lambda theta: 0.0,
        requirements=problem.requirements,
        delta_box=problem.delta_box,
        response=problem.response,
        design_constraints=problem.design_constraints,
        n_design_constraints=problem.n_design_constraints,
        synthetic=problem.synthetic,
    )
    spec = FormulationSpec(RISK_AVERSE_SCENARIO, rho=rho, gamma=gamma)
    program = build_risk_averse_scenario(relaxed, dataset, spec)
    sol = multistart(program, options or SolverOptions(multistart=3))
    theta = sol.x[program.blocks["theta"]]
    report = extract_outliers(problem, dataset, theta, gamma)
    return report.count / dataset.n

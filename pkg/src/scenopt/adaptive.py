"""Computational-cost reducers: adversarial perturbations, sequential design.

An adversarial perturbation replaces a cloud of random points with the
single point on the perturbation ball's surface that increases the worst
requirement fastest.  Sequential design grows a small training set by
repeatedly adding the testing points that marginally violate the current
design, until the estimated failure probability meets its target.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import Estimate, reliability
from .errors import ConfigurationError, DegenerateGradientError
from .formulations import FormulationSpec, build, extract_outliers
from .problems import DesignProblem
from .scenarios import MultiPointDataset, SeededSampler, adversarial_radius
from .solver import SolverOptions, multistart

_GRAD_FLOOR = 1e-12


@dataclass(frozen=True)
class PerturbBudget:
    """Bookkeeping for an adversarial expansion of a scenario set.

    q[i] is 1 when scenario i received an adversarial point, else 0;
    worst_requirement[i] is the requirement index that drove it.
    """

    q: np.ndarray
    worst_requirement: np.ndarray
    baseline: np.ndarray
    step_scale: float = 1.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=int)
        if np.any((q != 0) & (q != 1)):
            raise ConfigurationError("budget entries must be 0 or 1")
        object.__setattr__(self, "q", q)

    @property
    def count(self) -> int:
        return int(np.sum(self.q))


def adversarial_point(
    problem: DesignProblem,
    theta_hat: np.ndarray,
    delta_n: np.ndarray,
    mu: float,
    fd_step: float = 1e-6,
) -> np.ndarray:
    """One first-order ascent step of the worst requirement, scaled to the
    ball surface: delta_n + mu * grad / ||grad||.

    The worst requirement is the argmax of r_k at (theta_hat, delta_n),
    taking the smallest index on ties; its gradient in delta is computed by
    central finite differences.  Raises :class:`DegenerateGradientError`
    when the gradient norm is numerically zero.
    """
    if mu <= 0:
        raise ConfigurationError("mu must be > 0")
    theta_hat = np.asarray(theta_hat, dtype=float)
    delta_n = np.asarray(delta_n, dtype=float)
    values = problem.requirements(theta_hat, delta_n[None, :])[0]
    k_hat = int(np.argmax(values))

    grad = np.empty_like(delta_n)
    for j in range(delta_n.size):
        h = fd_step * max(1.0, abs(delta_n[j]))
        e = np.zeros_like(delta_n)
        e[j] = h
        hi = problem.requirements(theta_hat, (delta_n + e)[None, :])[0, k_hat]
        lo = problem.requirements(theta_hat, (delta_n - e)[None, :])[0, k_hat]
        grad[j] = (hi - lo) / (2.0 * h)

    norm = float(np.linalg.norm(grad))
    if norm < _GRAD_FLOOR:
        raise DegenerateGradientError(
            f"requirement {k_hat} gradient is numerically zero at the nominal point"
        )
    return delta_n + mu * grad / norm


def random_surface_point(delta_n: np.ndarray, mu: float, rng: np.random.Generator) -> np.ndarray:
    """Seeded fallback when the requirement gradient is degenerate."""
    direction = rng.standard_normal(delta_n.size)
    direction /= np.linalg.norm(direction)
    return np.asarray(delta_n, dtype=float) + mu * direction


def select_scenarios(
    problem: DesignProblem, theta_hat: np.ndarray, scenarios: np.ndarray, count: int
) -> tuple[np.ndarray, bool]:
    """Scenarios nearest the failure boundary from inside.

    Returns the indices of the `count` scenarios with the largest negative
    worst-requirement values; scenarios already violating are excluded.
    When fewer than `count` qualify, all of them are returned with the
    warning flag set.
    """
    scenarios = np.atleast_2d(scenarios)
    if count > scenarios.shape[0]:
        raise ConfigurationError("count exceeds the number of scenarios")
    worst = problem.worst_requirement(np.asarray(theta_hat, dtype=float), scenarios)
    negative = np.where(worst < 0.0)[0]
    ranked = negative[np.argsort(-worst[negative])]  # closest to zero first
    if ranked.size < count:
        return ranked, True
    return ranked[:count], False


def build_adversarial_dataset(
    problem: DesignProblem,
    theta_hat: np.ndarray,
    scenarios: np.ndarray,
    count: int,
    r_max: float,
    sampler: SeededSampler,
    include_nominal: bool = True,
) -> tuple[MultiPointDataset, PerturbBudget]:
    """Perturb the `count` scenarios closest to the failure boundary.

    Each selected scenario gains one adversarial point on the surface of
    its ball (radius from the exponential boundary-proximity rule); the
    rest keep their nominal point only.
    """
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    theta_hat = np.asarray(theta_hat, dtype=float)
    selected, _ = select_scenarios(problem, theta_hat, scenarios, count)
    rng = sampler.rng()
    q = np.zeros(scenarios.shape[0], dtype=int)
    khat = np.full(scenarios.shape[0], -1)
    clouds = []
    for i, nominal in enumerate(scenarios):
        if i in selected:
            mu = adversarial_radius(nominal, theta_hat, problem, r_max)
            try:
                adv = adversarial_point(problem, theta_hat, nominal, mu)
            except DegenerateGradientError:
                adv = random_surface_point(nominal, mu, rng)
            q[i] = 1
            khat[i] = int(np.argmax(problem.requirements(theta_hat, nominal[None, :])[0]))
            clouds.append(np.vstack([nominal, adv]) if include_nominal else adv[None, :])
        else:
            clouds.append(nominal[None, :])
    dataset = MultiPointDataset(scenarios, tuple(clouds), seed=sampler.seed)
    return dataset, PerturbBudget(q, khat, theta_hat)


@dataclass(frozen=True)
class SequentialIteration:
    iteration: int
    n_train: int
    objective: float
    sigma: int
    p_hat: Estimate
    non_iid: bool


@dataclass(frozen=True)
class SequentialResult:
    """Design sequence with per-iteration reliability trace.

    Augmented training sets are flagged non-IID: the appended points were
    chosen by the previous design, so outlier statistics of later
    iterations are not unbiased estimates of failure probabilities.
    """

    designs: list
    trace: list
    status: str  # target-met | max-iterations | anomaly
    dataset: MultiPointDataset

    @property
    def final_design(self) -> np.ndarray:
        return self.designs[-1]

    def write_trace_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "n_train", "objective", "sigma", "p_hat", "ci_lo", "ci_hi", "non_iid"])
            for it in self.trace:
                writer.writerow(
                    [
                        it.iteration,
                        it.n_train,
                        f"{it.objective:.12g}",
                        it.sigma,
                        f"{it.p_hat.value:.12g}",
                        f"{it.p_hat.lo:.12g}",
                        f"{it.p_hat.hi:.12g}",
                        int(it.non_iid),
                    ]
                )


def sequential_design(
    problem: DesignProblem,
    initial: MultiPointDataset,
    spec: FormulationSpec,
    pool: np.ndarray,
    batch_size: int,
    max_iterations: int,
    target_pf: float = 0.0,
    options: SolverOptions | None = None,
) -> SequentialResult:
    """Grow the training set with marginally violating pool points.

    Each round solves the chosen formulation, estimates the failure
    probability on the remaining pool, and stops once it reaches the
    target; otherwise the `batch_size` pool points with the smallest
    positive worst-requirement values join the training set.  Pool points
    are consumed at most once and the training set only ever grows.
    """
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    if max_iterations < 1:
        raise ConfigurationError("max_iterations must be >= 1")
    pool = np.atleast_2d(np.asarray(pool, dtype=float)).copy()
    options = options or SolverOptions(multistart=3)
    gamma = spec.gamma if spec.gamma is not None else 1.0

    training = initial
    available = np.ones(pool.shape[0], dtype=bool)
    designs: list[np.ndarray] = []
    trace: list[SequentialIteration] = []
    status = "max-iterations"

    for iteration in range(1, max_iterations + 1):
        program = build(problem, training, spec)
        sol = multistart(program, options)
        theta = sol.x[program.blocks["theta"]]
        designs.append(theta)

        remaining = pool[available]
        if remaining.shape[0] == 0:
            # pool exhausted: no testing evidence of failure remains
            est = Estimate(0.0, 0.0, 1.0, 0, 0)
        else:
            est = reliability(problem, theta, remaining)
        sigma = extract_outliers(problem, training, theta, gamma).count
        trace.append(
            SequentialIteration(iteration, training.n, sol.objective, sigma, est, non_iid=iteration > 1)
        )

        if est.value <= target_pf:
            status = "target-met"
            break
        worst = problem.worst_requirement(theta, remaining)
        violating = np.where(worst > 0.0)[0]
        if violating.size == 0:
            status = "anomaly"  # inconsistent estimate: p_hat > target, no violator
            break
        order = violating[np.argsort(worst[violating])]  # smallest positive first
        take = order[:batch_size]
        absolute = np.where(available)[0][take]
        training = training.augmented(pool[absolute])
        available[absolute] = False

    return SequentialResult(designs, trace, status, training)

"""Monte Carlo reliability and robustness analysis of a fixed design.

Reliability: fraction of nominal test scenarios falling in the failure
domain.  Robustness: fraction of test scenarios whose perturbation cloud
puts more than the tolerated share of points in the failure domain.  Both
carry exact (Clopper-Pearson) binomial confidence intervals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import beta as _beta

from .problems import DesignProblem
from .scenarios import PerturbationModel, SeededSampler, sample_perturbations

_CHUNK_POINTS = 2_000_000  # scenario chunking cap for perturbation draws


def binomial_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact two-sided Clopper-Pearson interval for a binomial proportion."""
    if not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    a = 1.0 - level
    lo = 0.0 if successes == 0 else float(_beta.ppf(a / 2.0, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(_beta.ppf(1.0 - a / 2.0, successes + 1, trials - successes))
    return lo, hi


@dataclass(frozen=True)
class Estimate:
    """A binomial proportion with its confidence interval."""

    value: float
    lo: float
    hi: float
    successes: int
    trials: int
    level: float = 0.95

    @classmethod
    def from_counts(cls, successes: int, trials: int, level: float = 0.95) -> "Estimate":
        lo, hi = binomial_ci(successes, trials, level)
        return cls(successes / trials, lo, hi, successes, trials, level)


def reliability(problem: DesignProblem, theta: np.ndarray, scenarios: np.ndarray, level: float = 0.95) -> Estimate:
    """Nominal failure probability: fraction of scenarios with max_k r_k > 0."""
    scenarios = np.atleast_2d(scenarios)
    if scenarios.shape[0] < 1:
        raise ValueError("need at least one test scenario")
    worst = problem.worst_requirement(np.asarray(theta, dtype=float), scenarios)
    return Estimate.from_counts(int(np.sum(worst > 0.0)), scenarios.shape[0], level)


def robustness(
    problem: DesignProblem,
    theta: np.ndarray,
    scenarios: np.ndarray,
    model: PerturbationModel,
    m_prime: int,
    gamma: float,
    sampler: SeededSampler,
    level: float = 0.95,
) -> Estimate:
    """Perturbational failure probability.

    Each scenario draws m' points from its perturbation distribution and
    counts as a failure iff strictly more than ceil(m' * (1 - gamma)) of
    them fail.  Deterministic under a fixed sampler (fixed chunking).
    """
    if m_prime < 1:
        raise ValueError("m_prime must be >= 1")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    theta = np.asarray(theta, dtype=float)
    scenarios = np.atleast_2d(scenarios)
    n = scenarios.shape[0]
    threshold = int(np.ceil(m_prime * (1.0 - gamma)))
    rng = sampler.rng()
    chunk = max(1, _CHUNK_POINTS // m_prime)
    failures = 0
    for start in range(0, n, chunk):
        block = scenarios[start : start + chunk]
        pts = sample_perturbations(block, model, m_prime, rng)
        flat = pts.reshape(-1, scenarios.shape[1])
        worst = problem.worst_requirement(theta, flat).reshape(block.shape[0], m_prime)
        fail_counts = np.sum(worst > 0.0, axis=1)
        failures += int(np.sum(fail_counts > threshold))
    return Estimate.from_counts(failures, n, level)


def per_requirement_failures(
    problem: DesignProblem, theta: np.ndarray, scenarios: np.ndarray, level: float = 0.95
) -> list[Estimate]:
    """Failure probability of each individual requirement."""
    scenarios = np.atleast_2d(scenarios)
    r = problem.requirements(np.asarray(theta, dtype=float), scenarios)
    return [
        Estimate.from_counts(int(np.sum(r[:, k] > 0.0)), scenarios.shape[0], level)
        for k in range(problem.n_r)
    ]


def loss_measures(problem: DesignProblem, theta: np.ndarray, scenarios: np.ndarray) -> np.ndarray:
    """Mean positive requirement value over failing samples, per requirement.

    Zero when no sample violates the requirement (not undefined), matching
    the convention used for fully reliable designs.
    """
    scenarios = np.atleast_2d(scenarios)
    r = problem.requirements(np.asarray(theta, dtype=float), scenarios)
    losses = np.zeros(problem.n_r)
    for k in range(problem.n_r):
        positive = r[:, k] > 0.0
        if np.any(positive):
            losses[k] = float(np.mean(r[positive, k]))
    return losses


@dataclass(frozen=True)
class AnalysisReport:
    """Reliability/robustness figures of merit for one design."""

    design: np.ndarray
    p_nom: Estimate
    p_per: dict = field(default_factory=dict)  # gamma -> Estimate
    per_requirement: list = field(default_factory=list)
    losses: np.ndarray = field(default_factory=lambda: np.empty(0))
    mean_response: float | None = None
    n_test: int = 0
    m_prime: int | None = None
    objective: float | None = None
    sigma: int | None = None
    labels: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        row = {
            "n_test": self.n_test,
            "m_prime": self.m_prime if self.m_prime is not None else "",
            "objective": _fmt(self.objective),
            "sigma": self.sigma if self.sigma is not None else "",
            "mean_response": _fmt(self.mean_response),
            "p_nom": _fmt(self.p_nom.value),
            "p_nom_lo": _fmt(self.p_nom.lo),
            "p_nom_hi": _fmt(self.p_nom.hi),
        }
        for gamma, est in sorted(self.p_per.items()):
            tag = f"p_per_{gamma:g}"
            row[tag] = _fmt(est.value)
            row[f"{tag}_lo"] = _fmt(est.lo)
            row[f"{tag}_hi"] = _fmt(est.hi)
        for k, est in enumerate(self.per_requirement, start=1):
            row[f"p_fail_r{k}"] = _fmt(est.value)
        for k, loss in enumerate(self.losses, start=1):
            row[f"loss_r{k}"] = _fmt(loss)
        row.update(self.labels)
        return [row]

    def write_csv(self, path: str | Path) -> None:
        rows = self.rows()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)

    def format_table(self) -> str:
        row = self.rows()[0]
        width = max(len(k) for k in row)
        lines = [f"{k.ljust(width)}  {row[k]}" for k in row]
        return "\n".join(lines)


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.6g}"


def analyze(
    problem: DesignProblem,
    theta: np.ndarray,
    scenarios: np.ndarray,
    model: PerturbationModel | None = None,
    m_prime: int | None = None,
    gammas: tuple[float, ...] = (),
    sampler: SeededSampler | None = None,
    level: float = 0.95,
    objective: float | None = None,
    sigma: int | None = None,
) -> AnalysisReport:
    """Full reliability (and optional robustness) analysis of one design."""
    theta = np.asarray(theta, dtype=float)
    scenarios = np.atleast_2d(scenarios)
    p_nom = reliability(problem, theta, scenarios, level)
    p_per = {}
    if model is not None and m_prime and gammas:
        if sampler is None:
            raise ValueError("robustness analysis requires a sampler")
        for j, gamma in enumerate(gammas):
            p_per[float(gamma)] = robustness(
                problem, theta, scenarios, model, m_prime, float(gamma), sampler.spawn(1000 + j), level
            )
    mean_resp = None
    if problem.response is not None:
        mean_resp = float(np.mean(problem.response(theta, scenarios)))
    return AnalysisReport(
        design=theta,
        p_nom=p_nom,
        p_per=p_per,
        per_requirement=per_requirement_failures(problem, theta, scenarios, level),
        losses=loss_measures(problem, theta, scenarios),
        mean_response=mean_resp,
        n_test=scenarios.shape[0],
        m_prime=m_prime,
        objective=objective,
        sigma=sigma,
    )

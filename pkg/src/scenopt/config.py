"""Run configuration: one JSON file drives data, formulation, solver, analysis.

Validation reports every problem at once rather than stopping at the first;
the config hash (over the canonical JSON) is embedded in every report so
results can be traced back to the exact configuration that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigurationError
from .formulations import KINDS, FormulationSpec
from .problems import DesignProblem, make_problem
from .scenarios import (
    BALL_SURFACE,
    BALL_VOLUME,
    DISTRIBUTION,
    PerturbationModel,
    SeededSampler,
    adversarial_radius_rule,
    constant_radius,
    load_csv,
    origin_distance_radius,
)
from .solver import SolverOptions

TEMPLATE: dict[str, Any] = {
    "problem": {"name": "enclosure", "params": {}},
    "scenarios": {"csv": None, "generator": "uniform-box", "n": 50, "seed": 7},
    "perturbation": {
        "kind": "ball-volume",
        "m": 1,
        "radius_rule": {"type": "constant", "value": 0.0},
        "distribution_family": None,
    },
    "formulation": {
        "kind": "worst-case",
        "rho": 100.0,
        "gamma": 1.0,
        "alpha": 0.0,
        "kappa": 5.0,
    },
    "solver": {
        "max_outer": 50,
        "constraint_tol": 1e-6,
        "objective_tol": 1e-8,
        "fd_step": 1e-6,
        "penalty_init": 10.0,
        "penalty_growth": 10.0,
        "inner_maxiter": 500,
        "multistart": 3,
        "seed": 0,
    },
    "analysis": {
        "n_test": 20000,
        "m_prime": 200,
        "gammas": [0.95],
        "level": 0.95,
        "seed": 123,
    },
    "sequential": {
        "initial_n": 50,
        "batch_size": 17,
        "max_iterations": 8,
        "pool_size": 10000,
        "target_pf": 0.0,
    },
    "output_dir": "scenopt-out",
    "seed": 7,
}


def config_hash(data: dict) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _merge(defaults: dict, override: dict) -> dict:
    out = {}
    for key, value in defaults.items():
        if isinstance(value, dict) and isinstance(override.get(key), dict):
            out[key] = _merge(value, override[key])
        elif key in override:
            out[key] = override[key]
        else:
            out[key] = json.loads(json.dumps(value))  # deep copy of default
    for key in override:
        if key not in defaults:
            out[key] = override[key]
    return out


def generate_scenarios(problem: DesignProblem, section: dict) -> np.ndarray:
    """Materialize the scenario dataset named by the config section."""
    if section.get("csv"):
        return load_csv(section["csv"], problem.n_delta)
    name = section.get("generator", "uniform-box")
    n = int(section.get("n", 50))
    seed = int(section.get("seed", 0))
    rng = SeededSampler(seed, stream=11).rng()
    if name == "uniform-box":
        return problem.sample_deltas(n, rng)
    if name == "enclosure-cluster":
        # ring-shaped scatter plus one far scenario that dominates the enclosure
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n - 1)
        rad = rng.uniform(1.2, 2.6, size=n - 1)
        ring = np.array([1.5, 0.9]) + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        return np.vstack([ring, [[-3.7, -0.4]]])
    if name == "enclosure-mixture":
        # 95% cluster, 5% diffuse ring tail
        n_tail = max(1, n // 20)
        cluster = rng.normal(loc=(1.5, 0.9), scale=(1.2, 1.0), size=(n - n_tail, 2))
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n_tail)
        rad = rng.uniform(3.2, 5.0, size=n_tail)
        tail = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        return np.vstack([cluster, tail])
    raise ConfigurationError(f"unknown scenario generator {name!r}")


def perturbation_model(section: dict, problem: DesignProblem, theta_baseline: np.ndarray | None = None) -> PerturbationModel:
    """Build the perturbation model, resolving the radius rule.

    The adversarial rule needs a design; callers pass the baseline (at
    training time) or the design under analysis.
    """
    rule_cfg = section.get("radius_rule", {"type": "constant", "value": 0.0})
    rtype = rule_cfg.get("type", "constant")
    if rtype == "constant":
        rule = constant_radius(float(rule_cfg.get("value", 0.0)))
    elif rtype == "origin-distance":
        rule = origin_distance_radius(float(rule_cfg.get("factor", 0.1)))
    elif rtype == "adversarial":
        if theta_baseline is None:
            raise ConfigurationError("adversarial radius rule needs a baseline design")
        rule = adversarial_radius_rule(problem, theta_baseline, float(rule_cfg.get("r_max", 0.5)))
    else:
        raise ConfigurationError(f"unknown radius rule type {rtype!r}")
    return PerturbationModel(
        kind=section.get("kind", BALL_VOLUME),
        radius_rule=rule,
        distribution_family=section.get("distribution_family"),
    )


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with typed accessors."""

    data: dict
    hash: str
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        data = _merge(TEMPLATE, raw)
        errors = validate(data, base_dir=path.parent)
        if errors:
            raise ConfigurationError("invalid configuration:\n" + "\n".join(f"- {e}" for e in errors))
        return cls(data, config_hash(data), path.parent)

    def problem(self) -> DesignProblem:
        section = self.data["problem"]
        return make_problem(section["name"], **section.get("params", {}))

    def scenarios(self, problem: DesignProblem) -> np.ndarray:
        section = dict(self.data["scenarios"])
        if section.get("csv"):
            section["csv"] = str(self._resolve(section["csv"]))
        return generate_scenarios(problem, section)

    def formulation_spec(self) -> FormulationSpec:
        f = self.data["formulation"]
        return FormulationSpec(
            kind=f["kind"],
            rho=_maybe_array(f.get("rho")),
            gamma=_maybe_array(f.get("gamma")),
            alpha=_maybe_array(f.get("alpha")),
            kappa=float(f.get("kappa", 5.0)),
        )

    def solver_options(self) -> SolverOptions:
        s = self.data["solver"]
        return SolverOptions(
            max_outer=int(s["max_outer"]),
            constraint_tol=float(s["constraint_tol"]),
            objective_tol=float(s["objective_tol"]),
            fd_step=float(s["fd_step"]),
            penalty_init=float(s["penalty_init"]),
            penalty_growth=float(s["penalty_growth"]),
            inner_maxiter=int(s["inner_maxiter"]),
            multistart=int(s["multistart"]),
            seed=int(s["seed"]),
        )

    def output_dir(self) -> Path:
        return self._resolve(self.data["output_dir"])

    def _resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _maybe_array(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return np.asarray(value, dtype=float)
    return float(value)


def validate(data: dict, base_dir: Path | None = None) -> list[str]:
    """Collect every validation error; an empty list means the config is usable."""
    errors: list[str] = []
    base = base_dir or Path(".")

    prob = data.get("problem", {})
    if prob.get("name") not in ("enclosure", "interval_cover", "wing_surrogate"):
        errors.append(f"problem.name {prob.get('name')!r} is not a registered problem")

    scen = data.get("scenarios", {})
    if scen.get("csv"):
        csv_path = Path(scen["csv"])
        if not csv_path.is_absolute():
            csv_path = base / csv_path
        if not csv_path.exists():
            errors.append(f"scenarios.csv does not exist: {csv_path}")
    elif scen.get("generator") not in ("uniform-box", "enclosure-cluster", "enclosure-mixture"):
        errors.append(f"scenarios.generator {scen.get('generator')!r} is unknown")
    if int(scen.get("n", 1)) < 1:
        errors.append("scenarios.n must be >= 1")

    pert = data.get("perturbation", {})
    if pert.get("kind") not in (BALL_SURFACE, BALL_VOLUME, DISTRIBUTION):
        errors.append(f"perturbation.kind {pert.get('kind')!r} is unknown")
    if int(pert.get("m", 1)) < 1:
        errors.append("perturbation.m must be >= 1")
    rule = pert.get("radius_rule", {})
    if rule.get("type", "constant") not in ("constant", "origin-distance", "adversarial"):
        errors.append(f"perturbation.radius_rule.type {rule.get('type')!r} is unknown")

    form = data.get("formulation", {})
    if form.get("kind") not in KINDS:
        errors.append(f"formulation.kind {form.get('kind')!r} is unknown")
    gamma = form.get("gamma")
    for g in np.atleast_1d(gamma if gamma is not None else 1.0):
        if not 0.0 < float(g) <= 1.0:
            errors.append(f"formulation.gamma entry {g} outside (0, 1]")
    alpha = form.get("alpha")
    if alpha is not None:
        for a in np.atleast_1d(alpha):
            if not 0.0 <= float(a) < 1.0:
                errors.append(f"formulation.alpha entry {a} outside [0, 1)")
    rho = form.get("rho")
    if rho is not None and np.any(np.atleast_1d(rho) < 0):
        errors.append("formulation.rho must be >= 0")
    if float(form.get("kappa", 5.0)) < 1.0:
        errors.append("formulation.kappa must be >= 1")

    sol = data.get("solver", {})
    for key in ("constraint_tol", "objective_tol", "fd_step"):
        if float(sol.get(key, 1.0)) <= 0:
            errors.append(f"solver.{key} must be > 0")
    if int(sol.get("multistart", 1)) < 1:
        errors.append("solver.multistart must be >= 1")
    if int(sol.get("max_outer", 1)) < 1:
        errors.append("solver.max_outer must be >= 1")

    ana = data.get("analysis", {})
    if int(ana.get("n_test", 1)) < 1:
        errors.append("analysis.n_test must be >= 1")
    if int(ana.get("m_prime", 1)) < 1:
        errors.append("analysis.m_prime must be >= 1")
    for g in ana.get("gammas", [0.95]):
        if not 0.0 < float(g) <= 1.0:
            errors.append(f"analysis.gammas entry {g} outside (0, 1]")
    if not 0.0 < float(ana.get("level", 0.95)) < 1.0:
        errors.append("analysis.level must be in (0, 1)")

    seq = data.get("sequential", {})
    if int(seq.get("batch_size", 1)) < 1:
        errors.append("sequential.batch_size must be >= 1")
    if int(seq.get("max_iterations", 1)) < 1:
        errors.append("sequential.max_iterations must be >= 1")
    if int(seq.get("pool_size", 1)) < 1:
        errors.append("sequential.pool_size must be >= 1")
    if not 0.0 <= float(seq.get("target_pf", 0.0)) <= 1.0:
        errors.append("sequential.target_pf must be in [0, 1]")

    return errors

"""Design problems: objective, requirement functions, and decision bounds.

Three problems ship with the toolkit: the 2-D data-enclosure problem (find
the annular region of minimal area containing a point set), a 1-D
interval-cover problem with closed-form optima used as a formulation
oracle, and a synthetic wing-like surrogate that matches the scale of a
realistic aeroelastic study (9 decision variables, 6 uncertain parameters,
2 requirements) without any of its physics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ecdf import SortedSample, ecdf_eval, prepare_values
from .scenarios import SeededSampler

_REGISTRY: dict[str, Callable[..., "DesignProblem"]] = {}


@dataclass(frozen=True)
class DesignProblem:
    """A smooth constrained design problem over theta with uncertain delta.

    ``requirements(theta, deltas)`` evaluates all n_r requirement functions
    at one design and a batch of parameter points, returning an
    (len(deltas), n_r) array; a point succeeds when every entry is <= 0.
    ``design_constraints`` are decision-space validity conditions g(theta)
    <= 0 appended unrelaxed to every formulation built on the problem.
    """

    name: str
    n_theta: int
    n_delta: int
    n_r: int
    lower: np.ndarray
    upper: np.ndarray
    objective: Callable[[np.ndarray], float]
    requirements: Callable[[np.ndarray, np.ndarray], np.ndarray]
    delta_box: np.ndarray  # (n_delta, 2) sampling box for testing data
    response: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    design_constraints: Callable[[np.ndarray], np.ndarray] | None = None
    n_design_constraints: int = 0
    synthetic: bool = False

    def worst_requirement(self, theta: np.ndarray, deltas: np.ndarray) -> np.ndarray:
        """max_k r_k(theta, delta) per row; <= 0 means success."""
        return np.max(self.requirements(theta, np.atleast_2d(deltas)), axis=1)

    def sample_deltas(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.delta_box[:, 0], self.delta_box[:, 1]
        return rng.uniform(lo, hi, size=(count, self.n_delta))

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.delta_box[:, 1] - self.delta_box[:, 0]))


def register_problem(name: str, factory: Callable[..., DesignProblem]) -> None:
    """Register a problem factory for lookup by name in run configs."""
    _REGISTRY[name] = factory


def make_problem(name: str, **kwargs) -> DesignProblem:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**kwargs)


# ---------------------------------------------------------------------------
# Data-enclosure problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnclosureDesign:
    """Annulus-like region: inside circle (c1, u1), outside circle (c2, u2)."""

    c1: np.ndarray
    u1: float
    c2: np.ndarray
    u2: float

    @classmethod
    def from_theta(cls, theta: np.ndarray) -> "EnclosureDesign":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[0:2].copy(), float(theta[2]), theta[3:5].copy(), float(theta[5]))

    def to_theta(self) -> np.ndarray:
        return np.concatenate([self.c1, [self.u1], self.c2, [self.u2]])

    def is_valid(self) -> bool:
        return (
            self.u1 > 0
            and self.u2 > 0
            and float(np.linalg.norm(self.c2 - self.c1)) <= self.u1
        )


def enclosure_requirements(theta: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """r1 = ||delta - c1|| - u1 (outside outer circle fails);
    r2 = u2 - ||delta - c2|| (inside inner circle fails)."""
    theta = np.asarray(theta, dtype=float)
    deltas = np.atleast_2d(deltas)
    r1 = np.linalg.norm(deltas - theta[0:2], axis=1) - theta[2]
    r2 = theta[5] - np.linalg.norm(deltas - theta[3:5], axis=1)
    return np.column_stack([r1, r2])


def enclosure_volume(theta: np.ndarray, delta_box: np.ndarray, mc_points: int, sampler: SeededSampler) -> float:
    """Monte Carlo area of the success region: Vol(box) * F_Z(0), with Z the
    worst-requirement values over uniform samples in the box."""
    delta_box = np.asarray(delta_box, dtype=float)
    rng = sampler.rng()
    pts = rng.uniform(delta_box[:, 0], delta_box[:, 1], size=(mc_points, delta_box.shape[0]))
    return _volume_from_samples(theta, pts, float(np.prod(delta_box[:, 1] - delta_box[:, 0])))


def _volume_from_samples(theta: np.ndarray, pts: np.ndarray, box_volume: float) -> float:
    """Vol(box) * F_Z(0) without the full sort.

    F at zero needs only the count of negative values and the two
    bracketing order statistics, so the piecewise-linear CDF value comes
    from one O(n) pass; agrees with the ecdf_eval path exactly on tie-free
    samples (ties at the bracket are a measure-zero event for Monte Carlo
    draws).
    """
    worst = np.max(enclosure_requirements(theta, pts), axis=1)
    n = worst.size
    neg = worst < 0.0
    i = int(np.count_nonzero(neg))
    if i == 0:
        return 0.0
    if i == n:
        return box_volume
    z_lo = float(np.max(worst[neg]))
    z_hi = float(np.min(worst[~neg]))
    if z_hi == z_lo:  # degenerate tie at the bracket
        prepared = prepare_values(worst)
        return box_volume * ecdf_eval(SortedSample(prepared), 0.0)
    frac = (i - 1 + (0.0 - z_lo) / (z_hi - z_lo)) / (n - 1)
    return box_volume * frac


def enclosure_problem(
    delta_box=((-6.0, 6.0), (-6.0, 6.0)),
    mc_points: int = 20000,
    seed: int = 2024,
) -> DesignProblem:
    """The minimal-area data-enclosure problem.

    The objective is the Monte Carlo area of the success region computed on
    a sample set frozen at construction, so that the objective is a fixed
    piecewise-linear function of theta (common random numbers across solver
    iterates).  theta = [c1x, c1y, u1, c2x, c2y, u2].
    """
    box = np.asarray(delta_box, dtype=float)
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    rng = SeededSampler(seed, stream=101).rng()
    frozen = rng.uniform(box[:, 0], box[:, 1], size=(mc_points, 2))

    span = float(np.max(box[:, 1] - box[:, 0]))
    lower = np.array([box[0, 0], box[1, 0], 1e-3, box[0, 0], box[1, 0], 1e-3])
    upper = np.array([box[0, 1], box[1, 1], 1.5 * span, box[0, 1], box[1, 1], 1.5 * span])

    def objective(theta: np.ndarray) -> float:
        return _volume_from_samples(theta, frozen, vol)

    def design_constraints(theta: np.ndarray) -> np.ndarray:
        # center of the inner circle must stay inside the outer circle
        return np.array([float(np.linalg.norm(theta[3:5] - theta[0:2])) - theta[2]])

    return DesignProblem(
        name="enclosure",
        n_theta=6,
        n_delta=2,
        n_r=2,
        lower=lower,
        upper=upper,
        objective=objective,
        requirements=enclosure_requirements,
        delta_box=box,
        design_constraints=design_constraints,
        n_design_constraints=1,
    )


# ---------------------------------------------------------------------------
# Interval-cover problem (closed-form oracle)
# ---------------------------------------------------------------------------

def interval_cover_problem(lo: float = 0.0, hi: float = 10.0, delta_box=(0.0, 4.0)) -> DesignProblem:
    """1-D cover problem: J(theta) = theta, r(theta, delta) = delta - theta.

    The worst-case optimum over a dataset D is max(D); the feasible set for
    a fixed delta is {theta >= delta}.  Used as an analytic oracle for the
    formulation and analysis machinery.
    """

    def objective(theta: np.ndarray) -> float:
        return float(theta[0])

    def requirements(theta: np.ndarray, deltas: np.ndarray) -> np.ndarray:
        deltas = np.atleast_2d(deltas)
        return deltas[:, 0:1] - theta[0]

    return DesignProblem(
        name="interval_cover",
        n_theta=1,
        n_delta=1,
        n_r=1,
        lower=np.array([lo]),
        upper=np.array([hi]),
        objective=objective,
        requirements=requirements,
        delta_box=np.array([delta_box], dtype=float),
        response=lambda theta, deltas: np.atleast_2d(deltas)[:, 0].astype(float),
    )


# ---------------------------------------------------------------------------
# Wing-like synthetic surrogate
# ---------------------------------------------------------------------------

def wing_surrogate_problem(seed: int = 0, probe_count: int = 512) -> DesignProblem:
    """Synthetic stand-in for an aeroelastic wing design problem.

    Matches the scale of a realistic study (n_theta=9, n_delta=6, n_r=2)
    with smooth, non-convex requirement margins and a mass-plus-drag style
    response, but no physics: every coefficient is drawn from the seed.
    Construction verifies by sampling that the feasible region on the
    decision box times the parameter box is nonempty.
    """
    n_theta, n_delta, n_r = 9, 6, 2
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(909,)))

    lin = rng.uniform(0.5, 1.5, size=(n_r, n_theta)) / n_theta  # stabilizing directions
    freq = rng.uniform(-1.0, 1.0, size=(n_r, n_theta))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_r)
    load = rng.uniform(0.3, 1.0, size=(n_r, n_delta)) / n_delta  # harsher delta lowers margin
    inter_t = rng.uniform(-1.0, 1.0, size=(n_r, n_theta)) / n_theta
    inter_d = rng.uniform(-1.0, 1.0, size=(n_r, n_delta)) / n_delta

    mass_w = 0.6 * (lin[0] + lin[1]) + rng.uniform(0.0, 0.05, size=n_theta)
    drag_center = rng.uniform(0.2, 0.8, size=n_theta)
    drag_delta = rng.uniform(0.0, 0.3, size=n_delta) / n_delta

    def margins(theta: np.ndarray, deltas: np.ndarray) -> np.ndarray:
        deltas = np.atleast_2d(deltas)
        base = lin @ theta + 0.25 * np.sin(freq @ theta + phase)  # (n_r,)
        cross = 0.1 * (inter_t @ theta)[None, :] * (deltas @ inter_d.T)
        return base[None, :] - deltas @ load.T + cross  # (len, n_r)

    # thresholds: keep ~20% of probed designs feasible for every probed delta
    probe_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(910,)))
    theta_probes = probe_rng.uniform(size=(probe_count, n_theta))
    delta_probes = probe_rng.uniform(size=(probe_count, n_delta))
    worst_margin = np.stack(
        [margins(tp, delta_probes).min(axis=0) for tp in theta_probes]
    )  # (probe_count, n_r)
    tau = np.quantile(worst_margin, 0.8, axis=0)

    def requirements(theta: np.ndarray, deltas: np.ndarray) -> np.ndarray:
        return tau[None, :] - margins(theta, deltas)

    def response(theta: np.ndarray, deltas: np.ndarray) -> np.ndarray:
        deltas = np.atleast_2d(deltas)
        mass = 1.0 + mass_w @ theta
        drag = 0.3 * float(np.mean((theta - drag_center) ** 2)) + deltas @ drag_delta
        return mass + drag

    ref_deltas = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(911,))).uniform(
        size=(256, n_delta)
    )

    def objective(theta: np.ndarray) -> float:
        return float(np.mean(response(theta, ref_deltas)))

    feasible = any(
        np.all(requirements(tp, delta_probes[i : i + 1]) <= 0.0)
        for i, tp in enumerate(theta_probes)
    )
    if not feasible:  # pragma: no cover - tau construction guarantees probes
        raise RuntimeError("wing surrogate construction found no feasible probe")

    return DesignProblem(
        name="wing_surrogate",
        n_theta=n_theta,
        n_delta=n_delta,
        n_r=n_r,
        lower=np.zeros(n_theta),
        upper=np.ones(n_theta),
        objective=objective,
        requirements=requirements,
        delta_box=np.column_stack([np.zeros(n_delta), np.ones(n_delta)]),
        response=response,
        synthetic=True,
    )


register_problem("enclosure", enclosure_problem)
register_problem("interval_cover", interval_cover_problem)
register_problem("wing_surrogate", wing_surrogate_problem)

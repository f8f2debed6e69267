"""Scenario datasets, perturbation models, seeded sampling, CSV ingestion.

A scenario is one realization of the uncertain parameter vector; datasets
are immutable (n, n_delta) arrays.  Perturbation models turn each nominal
scenario into a ball (surface or volume) or a truncated distribution, and
:func:`expand` materializes them as multi-point clouds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ParseError

BALL_SURFACE = "ball-surface"
BALL_VOLUME = "ball-volume"
DISTRIBUTION = "distribution"

_KINDS = (BALL_SURFACE, BALL_VOLUME, DISTRIBUTION)
_FAMILIES = ("uniform-in-ball", "gaussian-truncated-to-ball")


@dataclass(frozen=True)
class SeededSampler:
    """Deterministic random stream: (seed, stream, call sequence) fix the output.

    ``rng()`` returns a fresh generator positioned at the start of the
    stream; hold on to one generator when drawing a sequence.
    """

    seed: int
    stream: int = 0
    algorithm: str = "pcg64"

    def rng(self) -> np.random.Generator:
        if self.algorithm != "pcg64":
            raise ConfigurationError(f"unknown sampler algorithm {self.algorithm!r}")
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))

    def spawn(self, stream: int) -> "SeededSampler":
        return SeededSampler(self.seed, stream, self.algorithm)


@dataclass(frozen=True)
class PerturbationModel:
    """Uncertainty model attached to each nominal scenario.

    ``radius_rule`` maps an (n, d) array of scenarios to their (n,) radii.
    ``kind`` selects ball-surface points, uniform ball-volume points, or a
    distribution (uniform-in-ball / gaussian-truncated-to-ball).
    """

    kind: str
    radius_rule: Callable[[np.ndarray], np.ndarray]
    norm: str = "euclidean"
    distribution_family: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")
        if self.norm != "euclidean":
            raise ConfigurationError(f"unsupported norm {self.norm!r}")
        if self.kind == DISTRIBUTION:
            fam = self.distribution_family or "uniform-in-ball"
            if fam not in _FAMILIES:
                raise ConfigurationError(f"unknown distribution family {fam!r}")
            object.__setattr__(self, "distribution_family", fam)

    def radii(self, scenarios: np.ndarray) -> np.ndarray:
        r = np.atleast_1d(np.asarray(self.radius_rule(scenarios), dtype=float))
        if r.shape != (scenarios.shape[0],):
            r = np.broadcast_to(r, (scenarios.shape[0],)).astype(float)
        if np.any(r < 0):
            raise ConfigurationError("radius rule produced a negative radius")
        return r


def constant_radius(value: float) -> Callable[[np.ndarray], np.ndarray]:
    """Radius rule: the same radius for every scenario."""
    if value < 0:
        raise ConfigurationError("radius must be >= 0")
    return lambda scen: np.full(scen.shape[0], float(value))


def origin_distance_radius(factor: float) -> Callable[[np.ndarray], np.ndarray]:
    """Radius rule: proportional to the scenario's distance from the origin."""
    if factor < 0:
        raise ConfigurationError("factor must be >= 0")
    return lambda scen: factor * np.linalg.norm(scen, axis=1)


def adversarial_radius(scenario: np.ndarray, theta: np.ndarray, problem, r_max: float) -> float:
    """Perturbation radius r_max * exp(-(max_k r_k(theta, scenario))^2).

    The closer the scenario sits to the failure boundary (worst requirement
    near zero), the larger the radius; the value is always in (0, r_max].
    """
    if r_max <= 0:
        raise ConfigurationError("r_max must be > 0")
    worst = float(np.max(problem.requirements(theta, np.atleast_2d(scenario))))
    return float(r_max * np.exp(-(worst**2)))


def adversarial_radius_rule(problem, theta: np.ndarray, r_max: float) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized form of :func:`adversarial_radius` for a fixed design."""
    if r_max <= 0:
        raise ConfigurationError("r_max must be > 0")
    theta = np.asarray(theta, dtype=float)

    def rule(scen: np.ndarray) -> np.ndarray:
        worst = np.max(problem.requirements(theta, scen), axis=1)
        return r_max * np.exp(-(worst**2))

    return rule


@dataclass(frozen=True)
class MultiPointDataset:
    """Nominal scenarios plus their perturbation clouds delta^(i,j).

    ``points[i]`` is an (m_i, d) array; m_i may differ between scenarios
    (adversarial datasets mix perturbed and unperturbed scenarios).
    """

    scenarios: np.ndarray
    points: tuple[np.ndarray, ...]
    model: PerturbationModel | None = None
    seed: int | None = None

    def __post_init__(self):
        scen = np.atleast_2d(np.asarray(self.scenarios, dtype=float))
        object.__setattr__(self, "scenarios", scen)
        pts = tuple(np.atleast_2d(np.asarray(p, dtype=float)) for p in self.points)
        if len(pts) != scen.shape[0]:
            raise ValueError("one point cloud required per scenario")
        for p in pts:
            if p.shape[0] < 1 or p.shape[1] != scen.shape[1]:
                raise ValueError("each cloud needs >= 1 point of scenario dimension")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.scenarios.shape[0]

    @property
    def n_delta(self) -> int:
        return self.scenarios.shape[1]

    @property
    def counts(self) -> np.ndarray:
        return np.array([p.shape[0] for p in self.points])

    @property
    def uniform_m(self) -> int | None:
        counts = self.counts
        return int(counts[0]) if np.all(counts == counts[0]) else None

    @classmethod
    def from_nominals(cls, scenarios: np.ndarray) -> "MultiPointDataset":
        scen = np.atleast_2d(np.asarray(scenarios, dtype=float))
        return cls(scen, tuple(row[None, :] for row in scen))

    def augmented(self, new_scenarios: np.ndarray) -> "MultiPointDataset":
        """Append nominal-only scenarios (m=1) to the dataset."""
        extra = np.atleast_2d(np.asarray(new_scenarios, dtype=float))
        scen = np.vstack([self.scenarios, extra])
        pts = self.points + tuple(row[None, :] for row in extra)
        return MultiPointDataset(scen, pts, self.model, self.seed)


def _unit_directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    vec = rng.standard_normal((count, dim))
    norms = np.linalg.norm(vec, axis=1, keepdims=True)
    # resample the (measure-zero) degenerate rows
    while np.any(norms < 1e-300):
        bad = norms[:, 0] < 1e-300
        vec[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(vec, axis=1, keepdims=True)
    return vec / norms


def _surface_points(center: np.ndarray, radius: float, m: int, rng: np.random.Generator) -> np.ndarray:
    d = center.size
    if d == 2:
        # deterministic ring: m equally spaced angles
        ang = 2.0 * np.pi * np.arange(m) / m
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        dirs = _unit_directions(rng, m, d)
    return center + radius * dirs


def _volume_points(center: np.ndarray, radius: float, m: int, rng: np.random.Generator) -> np.ndarray:
    d = center.size
    dirs = _unit_directions(rng, m, d)
    radial = rng.uniform(size=(m, 1)) ** (1.0 / d)
    return center + radius * radial * dirs


def _gaussian_ball_points(center: np.ndarray, radius: float, m: int, rng: np.random.Generator) -> np.ndarray:
    # sigma = radius / 3 so the ball holds ~3 sigma; rejection keeps support exact
    d = center.size
    if radius == 0.0:
        return np.tile(center, (m, 1))
    out = np.empty((m, d))
    need = np.arange(m)
    while need.size:
        draw = rng.normal(scale=radius / 3.0, size=(need.size, d))
        ok = np.linalg.norm(draw, axis=1) <= radius
        out[need[ok]] = center + draw[ok]
        need = need[~ok]
    return out


def expand(scenarios: np.ndarray, model: PerturbationModel, m: int, sampler: SeededSampler) -> MultiPointDataset:
    """Draw m perturbed points per scenario according to the model.

    Ball-surface points sit at distance exactly radius from the nominal;
    ball-volume and uniform-in-ball points are uniform in the ball.  The
    expansion is deterministic under a fixed sampler.
    """
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    scen = np.atleast_2d(np.asarray(scenarios, dtype=float))
    radii = model.radii(scen)
    rng = sampler.rng()
    clouds = []
    for center, radius in zip(scen, radii):
        if radius == 0.0:
            clouds.append(np.tile(center, (m, 1)))
        elif model.kind == BALL_SURFACE:
            clouds.append(_surface_points(center, radius, m, rng))
        elif model.kind == BALL_VOLUME:
            clouds.append(_volume_points(center, radius, m, rng))
        elif model.distribution_family == "uniform-in-ball":
            clouds.append(_volume_points(center, radius, m, rng))
        else:
            clouds.append(_gaussian_ball_points(center, radius, m, rng))
    return MultiPointDataset(scen, tuple(clouds), model=model, seed=sampler.seed)


def sample_perturbations(
    scenarios: np.ndarray, model: PerturbationModel, m: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw an (n, m, d) block of perturbed points for analysis campaigns.

    Same point models as :func:`expand` but vectorized across scenarios and
    returning a dense array (all scenarios share the count m).
    """
    scen = np.atleast_2d(np.asarray(scenarios, dtype=float))
    n, d = scen.shape
    radii = model.radii(scen)[:, None, None]
    if model.kind == BALL_SURFACE:
        if d == 2:
            ang = 2.0 * np.pi * np.arange(m) / m
            dirs = np.broadcast_to(np.column_stack([np.cos(ang), np.sin(ang)]), (n, m, d))
        else:
            dirs = _unit_directions(rng, n * m, d).reshape(n, m, d)
        return scen[:, None, :] + radii * dirs
    if model.kind == BALL_VOLUME or model.distribution_family == "uniform-in-ball":
        dirs = _unit_directions(rng, n * m, d).reshape(n, m, d)
        radial = rng.uniform(size=(n, m, 1)) ** (1.0 / d)
        return scen[:, None, :] + radii * radial * dirs
    out = np.empty((n, m, d))
    for i in range(n):
        out[i] = _gaussian_ball_points(scen[i], float(radii[i, 0, 0]), m, rng)
    return out


def load_csv(path: str | Path, n_delta: int) -> np.ndarray:
    """Read scenarios from a CSV file with a header row of n_delta columns.

    Returns an (n, n_delta) array preserving row and column order.  Raises
    :class:`ParseError` with the offending line number for malformed rows.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", line=1) from None
        if len(header) != n_delta:
            raise ParseError(f"expected {n_delta} columns, header names {len(header)}", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != n_delta:
                raise ParseError(f"expected {n_delta} fields, got {len(row)}", line=lineno)
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    if not rows:
        return np.empty((0, n_delta))
    return np.asarray(rows, dtype=float)


def save_csv(path: str | Path, scenarios: np.ndarray, names: Sequence[str] | None = None) -> None:
    """Write scenarios in the ingestion format (header + one row per scenario)."""
    scen = np.atleast_2d(np.asarray(scenarios, dtype=float))
    names = names or [f"delta{i + 1}" for i in range(scen.shape[1])]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        writer.writerows(scen.tolist())

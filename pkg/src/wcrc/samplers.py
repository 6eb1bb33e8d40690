"""Generators for the importance, snowball and selective-prediction processes."""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .scenarios import Scenario, ScenarioDistribution


@dataclass
class ImportanceConfig:
    inclusion_probs: list[float]
    num_scenarios: int = 2000
    rng_seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.inclusion_probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p <= 0) or np.any(p > 1):
            raise ValueError("inclusion probabilities must lie in (0, 1]")
        if self.num_scenarios < 1:
            raise ValueError("num_scenarios must be positive")

    @classmethod
    def table1(cls, num_scenarios: int = 2000, rng_seed: int = 0) -> "ImportanceConfig":
        return cls([0.1] * 25 + [0.5] * 25, num_scenarios, rng_seed)


@dataclass
class SnowballConfig:
    num_points: int = 50
    sample_size: int = 15
    num_scenarios: int = 1000
    neighbor_count: int = 5
    recruits_per_node: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if not self.recruits_per_node <= self.neighbor_count < self.num_points:
            raise ValueError("need recruits_per_node <= neighbor_count < num_points")
        if not 1 <= self.sample_size <= self.num_points:
            raise ValueError(f"sample_size must lie in [1, {self.num_points}]")
        if self.num_scenarios < 1:
            raise ValueError("num_scenarios must be positive")


@dataclass
class SelectiveConfig:
    n: int = 16
    enumerate: bool = True
    num_scenarios: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"selective prediction needs n a power of two >= 2, got {self.n}")


@dataclass
class GeometricPopulation:
    points: np.ndarray
    neighbors: np.ndarray = field(repr=False)

    @classmethod
    def from_points(cls, points: np.ndarray, k: int) -> "GeometricPopulation":
        points = np.asarray(points, dtype=float)
        # query k+1 and drop self; ties are broken by index order
        _, nbr = cKDTree(points).query(points, k=k + 1)
        nbr = np.array([[j for j in row if j != i][:k] for i, row in enumerate(nbr)])
        return cls(points, nbr)

    @property
    def n(self) -> int:
        return len(self.points)


def gen_importance(cfg: ImportanceConfig) -> ScenarioDistribution:
    """Each index j enters the sample independently w.p. p_j; target is everything.

    Empty samples are redrawn.
    """
    p = np.asarray(cfg.inclusion_probs, dtype=float)
    n = p.size
    rng = np.random.default_rng(cfg.rng_seed)
    full = tuple(range(n))
    pairs = []
    while len(pairs) < cfg.num_scenarios:
        draw = rng.random(n) < p
        if draw.any():
            pairs.append((tuple(np.flatnonzero(draw).tolist()), full))
    return ScenarioDistribution.uniform(
        n, pairs, provenance={"process": "importance", **asdict(cfg)})


def _snowball_sample(pop: GeometricPopulation, cfg: SnowballConfig,
                     rng: np.random.Generator) -> list[int]:
    n = pop.n
    recruited = np.zeros(n, dtype=bool)
    sample: list[int] = []
    frontier: deque[int] = deque()

    def add(j):
        recruited[j] = True
        sample.append(j)
        frontier.append(j)

    add(int(rng.integers(n)))
    while len(sample) < cfg.sample_size:
        if not frontier:
            add(int(rng.choice(np.flatnonzero(~recruited))))
            continue
        node = frontier.popleft()
        picks = rng.choice(pop.neighbors[node], size=cfg.recruits_per_node, replace=False)
        for j in picks:
            if len(sample) == cfg.sample_size:
                break
            if not recruited[j]:
                add(int(j))
    return sample


def gen_snowball(cfg: SnowballConfig) -> tuple[GeometricPopulation, ScenarioDistribution]:
    rng = np.random.default_rng(cfg.rng_seed)
    pop = GeometricPopulation.from_points(rng.random((cfg.num_points, 2)), cfg.neighbor_count)
    full = tuple(range(cfg.num_points))
    pairs = [(tuple(_snowball_sample(pop, cfg, rng)), full) for _ in range(cfg.num_scenarios)]
    return pop, ScenarioDistribution.uniform(
        cfg.num_points, pairs, provenance={"process": "snowball", **asdict(cfg)})


def selective_pair(n: int, t: int, w: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """0-based sample {0..t-1} and target {t..min(t+w, n)-1}."""
    return tuple(range(t)), tuple(range(t, min(t + w, n)))


def gen_selective(cfg: SelectiveConfig) -> ScenarioDistribution:
    n = cfg.n
    windows = [2 ** k for k in range(n.bit_length() - 1)]
    prov = {"process": "selective", **asdict(cfg)}
    if cfg.enumerate:
        pairs = [selective_pair(n, t, w) for t in range(1, n) for w in windows]
        return ScenarioDistribution.uniform(n, pairs, provenance=prov)
    rng = np.random.default_rng(cfg.rng_seed)
    ts = rng.integers(1, n, size=cfg.num_scenarios)
    ws = rng.choice(windows, size=cfg.num_scenarios)
    return ScenarioDistribution.uniform(
        n, [selective_pair(n, int(t), int(w)) for t, w in zip(ts, ws)], provenance=prov)


def spatial_values(pop: GeometricPopulation) -> np.ndarray:
    """Coordinate sum shifted from [0, 2] into [-1, 1]."""
    return pop.points.sum(axis=1) - 1.0


def importance_scenarios(p: np.ndarray, m: int, rng: np.random.Generator) -> list[Scenario]:
    """Helper for drawing fresh importance queries outside a stored distribution."""
    n = len(p)
    out = []
    while len(out) < m:
        draw = rng.random(n) < p
        if draw.any():
            out.append(Scenario(np.flatnonzero(draw).tolist(), range(n), 1.0 / m))
    return out

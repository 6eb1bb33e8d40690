"""Near-optimal semilinear estimators from the Schur-complement relaxation.

``solve_full`` works from the whole scenario list; ``estimate_sampled``
works from i.i.d. draws of the distribution with an eigenvalue floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .audit import AuditConfig, AuditReport, audit
from .estimators import SemilinearEstimator
from .scenarios import Scenario, ScenarioDistribution, check_bounded, make_target_vector
from .sdp import PINV_RCOND, ScenarioBlocks, SolverConfig, SpectralSolution, solve_schur


@dataclass
class SamplingRunConfig:
    t: int
    eps: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be at least 1")
        if not 0 < self.eps < 1:
            raise ValueError("the eigenvalue floor eps must lie in (0, 1)")


@dataclass
class QueryInstance:
    sample: tuple[int, ...]
    target: tuple[int, ...]
    x_A: dict[int, float]

    def __post_init__(self):
        self.sample = tuple(sorted(int(j) for j in self.sample))
        self.target = tuple(sorted(int(j) for j in self.target))
        self.x_A = {int(k): float(v) for k, v in dict(self.x_A).items()}
        if set(self.x_A) != set(self.sample):
            raise ValueError("observed values must cover exactly the sample set")
        check_bounded(np.array(list(self.x_A.values())))

    @classmethod
    def from_dict(cls, data: Mapping) -> "QueryInstance":
        return cls(data["sample"], data["target"], {int(j): v for j, v in data["x_A"]})

    @classmethod
    def load(cls, path: str | Path) -> "QueryInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def values(self) -> np.ndarray:
        return np.array([self.x_A[j] for j in self.sample])


def weights_from_V(V: np.ndarray, sample: Sequence[int], target: Sequence[int]) -> np.ndarray:
    """a restricted to A equals V_AA^+ V_A b, zero elsewhere."""
    n = V.shape[0]
    A = np.array(sorted(sample), dtype=int)
    b = make_target_vector(target, n)
    a = np.zeros(n)
    if A.size:
        a[A] = np.linalg.pinv(V[np.ix_(A, A)], rcond=PINV_RCOND, hermitian=True) @ (V[A] @ b)
    return a


def solve_full(dist: ScenarioDistribution,
               cfg: SolverConfig | None = None) -> tuple[SemilinearEstimator, float]:
    """Semilinear estimator within pi/2 of the best one, and its SDP bound."""
    cfg = cfg or SolverConfig()
    sol = solve_schur(dist, cfg)
    weights = ScenarioBlocks.from_distribution(dist).weights(sol.V, pseudo=cfg.eig_floor == 0)
    return SemilinearEstimator(dist.n, weights, sol.V), sol.objective


def draw_scenarios(dist: ScenarioDistribution, t: int, rng_seed: int = 0) -> ScenarioDistribution:
    """t i.i.d. draws from the weighted distribution, as a uniform list."""
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(dist.m, size=t, p=dist.probs / dist.probs.sum())
    return ScenarioDistribution.uniform(
        dist.n, [(dist.scenarios[i].sample, dist.scenarios[i].target) for i in picks],
        provenance={"drawn_from": dist.provenance, "t": t, "rng_seed": rng_seed})


def sampled_solution(samples: ScenarioDistribution | Sequence[Scenario], n: int | None = None,
                     cfg: SamplingRunConfig | None = None,
                     solver: SolverConfig | None = None) -> SpectralSolution:
    """Solve the sampled Schur objective with the floor eps (one solve serves every query)."""
    if not isinstance(samples, ScenarioDistribution):
        samples = list(samples)
        samples = ScenarioDistribution.uniform(n, [(s.sample, s.target) for s in samples])
    cfg = cfg or SamplingRunConfig(t=samples.m)
    if cfg.t != samples.m:
        raise ValueError(f"expected t = {cfg.t} sampled scenarios, got {samples.m}")
    base = solver or SolverConfig()
    solver = SolverConfig(eig_floor=cfg.eps, rel_tol=base.rel_tol, max_iters=base.max_iters,
                          rng_seed=base.rng_seed, restarts=base.restarts)
    return solve_schur(samples, solver)


def estimate_sampled(samples: ScenarioDistribution | Sequence[Scenario], query: QueryInstance,
                     cfg: SamplingRunConfig, solver: SolverConfig | None = None,
                     n: int | None = None) -> float:
    """x_A^T V~_AA^{-1} V~_A b for the query, with V~ from the sampled objective."""
    sol = sampled_solution(samples, n, cfg, solver)
    return predict_with_V(sol.V, query)


def predict_with_V(V: np.ndarray, query: QueryInstance) -> float:
    a = weights_from_V(V, query.sample, query.target)
    return float(a[list(query.sample)] @ query.values()) if query.sample else 0.0


def worst_case_of_returned(est: SemilinearEstimator, dist: ScenarioDistribution,
                           sdp_bound: float | None = None,
                           cfg: AuditConfig | None = None) -> AuditReport:
    cfg = cfg or AuditConfig()
    report = audit(est, dist, cfg)
    if sdp_bound is not None and report.exact_value is not None:
        if report.exact_value > sdp_bound + cfg.tol + report.solver_residual:
            raise AssertionError(
                f"exact worst case {report.exact_value} exceeds solver bound {sdp_bound}")
    return report

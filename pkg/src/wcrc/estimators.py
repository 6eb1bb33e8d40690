"""Semilinear estimators and the standard baselines they are compared against."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .scenarios import Scenario, ScenarioDistribution

SUPPORT_TOL = 0.0


@dataclass(frozen=True)
class SemilinearEstimator:
    """Per-scenario weight vectors (rows of ``weights``), optionally with the
    certificate matrix ``V`` used to answer queries for unseen scenarios."""

    n: int
    weights: np.ndarray
    V: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[1] != self.n:
            raise ValueError(f"weights must have shape (m, {self.n}), got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.V is not None:
            V = np.array(self.V, dtype=float)
            if V.shape != (self.n, self.n):
                raise ValueError("certificate matrix has the wrong shape")
            if not np.allclose(V, V.T, atol=1e-10):
                raise ValueError("certificate matrix is not symmetric")
            if np.any(np.diag(V) > 1 + 1e-9) or np.linalg.eigvalsh(V)[0] < -1e-8:
                raise ValueError("certificate matrix is not in the capped PSD set")
            V.setflags(write=False)
            object.__setattr__(self, "V", V)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    def check_support(self, dist: ScenarioDistribution) -> None:
        if dist.n != self.n or dist.m != self.m:
            raise ValueError(f"estimator is ({self.m}, {self.n}), distribution is ({dist.m}, {dist.n})")
        off = np.abs(self.weights[~dist.sample_mask()])
        if off.size and off.max() > SUPPORT_TOL:
            raise ValueError("estimator places weight outside a sample set")

    def query_weights(self, sample, target) -> np.ndarray:
        """Weights for an arbitrary (A, B) from the stored certificate matrix."""
        if self.V is None:
            raise ValueError("estimator carries no certificate matrix")
        from .optimal import weights_from_V
        return weights_from_V(self.V, sample, target)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "weights": [
                {"scenario": i, "entries": [[int(j), float(row[j])] for j in np.flatnonzero(row)]}
                for i, row in enumerate(self.weights)
            ],
        }
        if self.V is not None:
            out["V"] = self.V.tolist()
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SemilinearEstimator":
        n = data["n"]
        rows = data["weights"]
        m = 1 + max((r["scenario"] for r in rows), default=-1)
        w = np.zeros((m, n))
        for r in rows:
            for j, val in r["entries"]:
                w[r["scenario"], j] = val
        return cls(n, w, data.get("V"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "SemilinearEstimator":
        return cls.from_dict(json.loads(Path(path).read_text()))


def estimate(est: SemilinearEstimator, scenario_index: int, x_A: Mapping[int, float]) -> float:
    """a_i^T x using only the observed values ``x_A`` (index -> value)."""
    row = est.weights[scenario_index]
    total = 0.0
    for j in np.flatnonzero(row):
        if int(j) not in x_A:
            raise KeyError(f"no observed value for supported index {int(j)}")
        total += row[j] * x_A[int(j)]
    return float(total)


# --- baselines -------------------------------------------------------------

@dataclass(frozen=True)
class SampleMean:
    name = "SampleMean"


@dataclass(frozen=True)
class HorvitzThompson:
    p: tuple[float, ...]
    name = "HorvitzThompson"

    def __post_init__(self):
        if any(q <= 0 for q in self.p):
            raise ValueError("Horvitz-Thompson needs strictly positive inclusion probabilities")


@dataclass(frozen=True)
class Subgroup:
    groups: tuple[tuple[int, ...], ...]
    name = "Subgroup"

    def check(self, n: int) -> None:
        seen = sorted(j for g in self.groups for j in g)
        if seen != list(range(n)):
            raise ValueError("subgroup partition must cover 0..n-1 disjointly")


@dataclass(frozen=True)
class RecentWindow:
    name = "RecentWindow"


BaselineKind = SampleMean | HorvitzThompson | Subgroup | RecentWindow


def baseline_weights(kind: BaselineKind, scenario: Scenario, n: int) -> np.ndarray:
    A = np.asarray(scenario.sample, dtype=int)
    if A.size == 0:
        raise ValueError("baseline estimators need a non-empty sample")
    a = np.zeros(n)
    if isinstance(kind, SampleMean):
        a[A] = 1.0 / A.size
    elif isinstance(kind, HorvitzThompson):
        # 1/(n p_j), not self-normalized
        p = np.asarray(kind.p, dtype=float)
        a[A] = 1.0 / (n * p[A])
    elif isinstance(kind, Subgroup):
        kind.check(n)
        in_sample = set(scenario.sample)
        for g in kind.groups:
            hit = [j for j in g if j in in_sample]
            # an empty group keeps its slot with an implicit mean of 0
            if hit:
                a[hit] = 1.0 / (len(kind.groups) * len(hit))
    elif isinstance(kind, RecentWindow):
        w = min(len(scenario.target), A.size)
        a[A[-w:]] = 1.0 / w
    else:
        raise TypeError(f"unknown baseline {kind!r}")
    return a


def baseline_estimator(kind: BaselineKind, dist: ScenarioDistribution) -> SemilinearEstimator:
    return SemilinearEstimator(
        dist.n, np.array([baseline_weights(kind, s, dist.n) for s in dist.scenarios]))


def mse_on_values(weights: np.ndarray | SemilinearEstimator, dist: ScenarioDistribution,
                  x: np.ndarray) -> float:
    """sum_i p_i ((a_i - b_i)^T x)^2 for fixed data values x."""
    if isinstance(weights, SemilinearEstimator):
        weights = weights.weights
    weights = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    if weights.shape != (dist.m, dist.n) or x.shape != (dist.n,):
        raise ValueError("dimension mismatch between weights, distribution and values")
    err = (weights - dist.target_matrix()) @ x
    return float(dist.probs @ err ** 2)

"""Populations, sample/target scenarios and scenario distributions.

Indices are 0-based everywhere, including the JSON interchange format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

PROB_TOL = 1e-9


class DistributionError(ValueError):
    """Raised for invalid scenarios or distribution files.

    ``code`` is one of ``"schema"``, ``"probability"``, ``"index"``,
    ``"empty"`` or ``"target"`` so callers can tell failures apart.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


def make_target_vector(target: Iterable[int], n: int) -> np.ndarray:
    """Uniform weight vector b over ``target`` (b_j = 1/|target|)."""
    idx = np.unique(np.asarray(list(target), dtype=int))
    if idx.size == 0:
        raise DistributionError("target", "degenerate target: empty target set")
    if idx[0] < 0 or idx[-1] >= n:
        raise DistributionError("index", f"target index out of range [0, {n})")
    b = np.zeros(n)
    b[idx] = 1.0 / idx.size
    return b


def target_mean(b: np.ndarray, x: np.ndarray) -> float:
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if b.shape != x.shape:
        raise ValueError(f"dimension mismatch: b has shape {b.shape}, x has {x.shape}")
    return float(b @ x)


@dataclass(frozen=True)
class Scenario:
    """One (sample set A, target set B, probability) atom of a distribution."""

    sample: tuple[int, ...]
    target: tuple[int, ...]
    prob: float = 1.0

    def __post_init__(self):
        sample = tuple(sorted(int(j) for j in self.sample))
        target = tuple(sorted(int(j) for j in self.target))
        if len(set(sample)) != len(sample):
            raise DistributionError("index", f"duplicate sample indices in {sample}")
        if len(set(target)) != len(target):
            raise DistributionError("index", f"duplicate target indices in {target}")
        if not target:
            raise DistributionError("target", "degenerate target: empty target set")
        if not self.prob >= 0:
            raise DistributionError("probability", f"negative probability {self.prob}")
        object.__setattr__(self, "sample", sample)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "prob", float(self.prob))

    def target_vector(self, n: int) -> np.ndarray:
        return make_target_vector(self.target, n)

    def check_range(self, n: int) -> None:
        for name, idx in (("sample", self.sample), ("target", self.target)):
            if idx and (idx[0] < 0 or idx[-1] >= n):
                raise DistributionError("index", f"{name} index out of range [0, {n}): {idx}")


@dataclass(frozen=True)
class ScenarioDistribution:
    """Finite weighted list of scenarios over a population {0, ..., n-1}.

    Duplicate (A, B) pairs are kept as separate atoms; see :meth:`merged`.
    """

    n: int
    scenarios: tuple[Scenario, ...]
    provenance: dict[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if self.n < 1:
            raise DistributionError("schema", f"population size must be positive, got {self.n}")
        if not self.scenarios:
            raise DistributionError("empty", "distribution has no scenarios")
        for s in self.scenarios:
            s.check_range(self.n)
        total = sum(s.prob for s in self.scenarios)
        if abs(total - 1.0) > PROB_TOL:
            raise DistributionError("probability", f"probabilities sum to {total!r}, not 1")

    @classmethod
    def uniform(cls, n: int, pairs: Iterable[tuple[Sequence[int], Sequence[int]]],
                provenance: dict | None = None) -> "ScenarioDistribution":
        pairs = list(pairs)
        if not pairs:
            raise DistributionError("empty", "distribution has no scenarios")
        p = 1.0 / len(pairs)
        return cls(n, tuple(Scenario(a, b, p) for a, b in pairs), provenance)

    @property
    def m(self) -> int:
        return len(self.scenarios)

    @property
    def probs(self) -> np.ndarray:
        return np.array([s.prob for s in self.scenarios])

    def target_matrix(self) -> np.ndarray:
        """Rows are the target vectors b_i."""
        out = np.zeros((self.m, self.n))
        for i, s in enumerate(self.scenarios):
            out[i, list(s.target)] = 1.0 / len(s.target)
        return out

    def sample_mask(self) -> np.ndarray:
        out = np.zeros((self.m, self.n), dtype=bool)
        for i, s in enumerate(self.scenarios):
            out[i, list(s.sample)] = True
        return out

    def merged(self) -> "ScenarioDistribution":
        """Collapse duplicate (A, B) pairs, summing their probabilities."""
        acc: dict[tuple, float] = {}
        for s in self.scenarios:
            key = (s.sample, s.target)
            acc[key] = acc.get(key, 0.0) + s.prob
        return ScenarioDistribution(
            self.n, tuple(Scenario(a, b, p) for (a, b), p in acc.items()), self.provenance)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "n": self.n,
            "scenarios": [
                {"sample": list(s.sample), "target": list(s.target), "prob": s.prob}
                for s in self.scenarios
            ],
        }
        if self.provenance is not None:
            out["provenance"] = self.provenance
        return out

    @classmethod
    def from_dict(cls, data: Any) -> "ScenarioDistribution":
        if not isinstance(data, dict) or "n" not in data or "scenarios" not in data:
            raise DistributionError("schema", "expected an object with 'n' and 'scenarios'")
        n = data["n"]
        raw = data["scenarios"]
        if not isinstance(n, int) or isinstance(n, bool) or not isinstance(raw, list):
            raise DistributionError("schema", "'n' must be an int and 'scenarios' a list")
        if not raw:
            raise DistributionError("empty", "distribution has no scenarios")
        given = 0.0
        missing = 0
        for entry in raw:
            if not isinstance(entry, dict) or "sample" not in entry or "target" not in entry:
                raise DistributionError("schema", f"bad scenario entry {entry!r}")
            for key in ("sample", "target"):
                if not isinstance(entry[key], list) or not all(
                        isinstance(j, int) and not isinstance(j, bool) for j in entry[key]):
                    raise DistributionError("schema", f"'{key}' must be a list of ints")
            if "prob" in entry and entry["prob"] is not None:
                if not isinstance(entry["prob"], (int, float)) or isinstance(entry["prob"], bool):
                    raise DistributionError("schema", f"'prob' must be a number, got {entry['prob']!r}")
                given += entry["prob"]
            else:
                missing += 1
        fill = (1.0 - given) / missing if missing else 0.0
        if missing and fill < -PROB_TOL:
            raise DistributionError("probability", f"explicit probabilities already sum to {given}")
        scenarios = []
        for entry in raw:
            p = entry.get("prob")
            scenarios.append(Scenario(entry["sample"], entry["target"], fill if p is None else p))
        return cls(n, tuple(scenarios), data.get("provenance"))


def save_distribution(dist: ScenarioDistribution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dist.to_dict()))


def load_distribution(path: str | Path) -> ScenarioDistribution:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DistributionError("schema", f"{path}: not valid JSON ({exc})") from exc
    return ScenarioDistribution.from_dict(data)


def load_values(path: str | Path, column: int = 0) -> np.ndarray:
    """Data values from a JSON array or a CSV column."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return np.asarray(json.loads(path.read_text()), dtype=float)
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return arr[:, column].astype(float)


def check_bounded(x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1 + tol):
        raise ValueError("data values must satisfy |x_j| <= 1")
    return x

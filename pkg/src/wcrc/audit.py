"""Worst-case expected squared error of a fixed semilinear estimator.

The worst case over |x_j| <= 1 is the PSD Grothendieck problem
max_{x in {-1,1}^n} x^T M x.  We bracket it with brute force (small n),
the semidefinite relaxation (upper) and hyperplane rounding (lower).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimators import SemilinearEstimator
from .scenarios import ScenarioDistribution
from .sdp import SolverConfig, solve_linear

EXACT_THRESHOLD = 22


class AuditError(RuntimeError):
    pass


def build_M(weights: np.ndarray | SemilinearEstimator, dist: ScenarioDistribution) -> np.ndarray:
    """M = sum_i p_i (a_i - b_i)(a_i - b_i)^T."""
    if isinstance(weights, SemilinearEstimator):
        weights = weights.weights
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (dist.m, dist.n):
        raise ValueError(f"weights have shape {weights.shape}, expected {(dist.m, dist.n)}")
    c = weights - dist.target_matrix()
    M = (c * dist.probs[:, None]).T @ c
    return (M + M.T) / 2


def exact_worst_case(M: np.ndarray, threshold: int = EXACT_THRESHOLD,
                     chunk: int = 1 << 15) -> tuple[float, np.ndarray]:
    """Brute-force max of x^T M x over sign vectors, with x_0 fixed to +1."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n > threshold:
        raise ValueError(f"n = {n} exceeds exact threshold {threshold}; use SDP bound")
    if n == 0:
        return 0.0, np.zeros(0)
    shifts = np.arange(n - 1)
    best_val, best_code = -np.inf, 0
    total = 1 << (n - 1)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        X = np.ones((codes.size, n))
        X[:, 1:] -= 2 * ((codes[:, None] >> shifts) & 1)
        vals = np.einsum("kj,kj->k", X @ M, X)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_code = vals[k], codes[k]
    x = np.ones(n)
    x[1:] -= 2 * ((best_code >> shifts) & 1)
    return float(x @ M @ x), x


def sdp_upper_bound(M: np.ndarray, cfg: SolverConfig | None = None):
    """Relaxation optimum <M, V> and the maximizing V (plus the full solution)."""
    sol = solve_linear(M, cfg or SolverConfig(eig_floor=0.0))
    return sol.objective, sol.V, sol


GRAM_RTOL = 1e-12


def _unit_vectors(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, Q = np.linalg.eigh((V + V.T) / 2)
    if lam[0] < -1e-6 * max(1.0, abs(lam[-1])):
        raise np.linalg.LinAlgError("cannot factor an indefinite V")
    # eigenvalues at roundoff level would add ~1e-8 transverse components
    # after the square root; treat them as exact zeros
    lam = np.where(lam > GRAM_RTOL * max(lam[-1], 0.0), lam, 0.0)
    W = Q * np.sqrt(lam)
    norms = np.linalg.norm(W, axis=1)
    zero = norms < 1e-12
    W[~zero] /= norms[~zero, None]
    W[zero] = 0.0
    return W, zero


def rounding_expectation(V: np.ndarray, M: np.ndarray) -> float:
    """E[x^T M x] under hyperplane rounding of the normalized Gram vectors of V."""
    W, zero = _unit_vectors(V)
    # angle = 2 atan2(|u - v|, |u + v|) stays accurate for nearly parallel
    # vectors, where arccos of the inner product loses half the digits
    diff = np.linalg.norm(W[:, None, :] - W[None, :, :], axis=2)
    plus = np.linalg.norm(W[:, None, :] + W[None, :, :], axis=2)
    angle = 2 * np.arctan2(diff, plus)
    angle[zero, :] = math.pi / 2
    angle[:, zero] = math.pi / 2
    np.fill_diagonal(angle, 0.0)
    return float(np.sum(M * (1 - (2 / math.pi) * angle)))


@dataclass
class Rounding:
    best_x: np.ndarray
    best_value: float
    expectation: float
    mc_mean: float
    mc_stderr: float


def round_certificate(V: np.ndarray, M: np.ndarray, rng_seed: int = 0,
                      num_rounds: int = 1000, chunk: int = 10000) -> Rounding:
    """Goemans-Williamson / Nesterov hyperplane rounding of V against M.

    Zero Gram vectors round to independent fair coins.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    W, zero = _unit_vectors(V)
    rng = np.random.default_rng(rng_seed)
    best_val, best_x = -np.inf, np.ones(n)
    s1 = s2 = 0.0
    shift = None
    done = 0
    while done < num_rounds:
        k = min(chunk, num_rounds - done)
        X = np.where(rng.standard_normal((k, n)) @ W.T >= 0, 1.0, -1.0)
        if zero.any():
            X[:, zero] = rng.choice([-1.0, 1.0], size=(k, int(zero.sum())))
        vals = np.einsum("kj,kj->k", X @ M, X)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_x = float(vals[j]), X[j].copy()
        # sums of deviations from the first value avoid cancellation when
        # the rounding is (nearly) deterministic
        if shift is None:
            shift = float(vals[0])
        dev = vals - shift
        s1 += dev.sum()
        s2 += (dev ** 2).sum()
        done += k
    mean_dev = s1 / done
    var = max(s2 / done - mean_dev ** 2, 0.0)
    return Rounding(best_x, float(best_x @ M @ best_x), rounding_expectation(V, M),
                    shift + mean_dev, math.sqrt(var / done))


@dataclass
class AuditConfig:
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(eig_floor=0.0))
    exact: bool | None = None
    exact_threshold: int = EXACT_THRESHOLD
    num_rounds: int = 1000
    rng_seed: int = 0
    tol: float = 1e-6


@dataclass
class AuditReport:
    sdp_upper: float
    sdp_dual: float
    rounding_lower: float
    rounding_best: float
    solver_residual: float
    exact_value: float | None = None
    witness_x: list[float] | None = None

    def violations(self, tol: float = 1e-6) -> list[str]:
        tol = tol + self.solver_residual
        out = []
        if self.rounding_lower > self.sdp_upper + tol:
            out.append("rounding expectation exceeds SDP value")
        if self.rounding_lower < (2 / math.pi) * self.sdp_upper - tol:
            out.append("rounding expectation below 2/pi of SDP value")
        if self.exact_value is not None:
            if self.exact_value > self.sdp_upper + tol:
                out.append("exact value exceeds SDP value")
            if self.sdp_upper > (math.pi / 2) * self.exact_value + tol:
                out.append("SDP value exceeds pi/2 times exact value")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def audit_matrix(M: np.ndarray, cfg: AuditConfig | None = None) -> AuditReport:
    cfg = cfg or AuditConfig()
    n = M.shape[0]
    value, V, sol = sdp_upper_bound(M, cfg.solver)
    rnd = round_certificate(V, M, cfg.rng_seed, cfg.num_rounds)
    report = AuditReport(value, sol.upper, rnd.expectation, rnd.best_value, sol.residual)
    run_exact = cfg.exact if cfg.exact is not None else n <= cfg.exact_threshold
    if run_exact:
        val, x = exact_worst_case(M, cfg.exact_threshold)
        report.exact_value, report.witness_x = val, x.tolist()
    bad = report.violations(cfg.tol)
    if bad:
        raise AuditError("; ".join(bad))
    return report


def audit(est: SemilinearEstimator | np.ndarray, dist: ScenarioDistribution,
          cfg: AuditConfig | None = None) -> AuditReport:
    if isinstance(est, SemilinearEstimator):
        est.check_support(dist)
    return audit_matrix(build_M(est, dist), cfg)

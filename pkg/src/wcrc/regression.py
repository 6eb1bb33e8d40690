"""Least-squares coefficients of the target set via entrywise mean estimation.

Every entry of Q = E_B[x x^T] and u = E_B[x y] is a target mean of a derived
scalar sequence bounded by 1, so one set of semilinear weights for the query
(A, B) serves all d^2 + d subproblems.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .optimal import SamplingRunConfig, sampled_solution, solve_full, weights_from_V
from .scenarios import ScenarioDistribution
from .sdp import PINV_RCOND, SolverConfig

PROVISO = 0.08


class IllConditionedError(ValueError):
    def __init__(self, sigma_min: float):
        super().__init__(f"ill-conditioned target covariance (sigma_min = {sigma_min:.3e})")
        self.sigma_min = sigma_min


@dataclass
class RegressionReport:
    beta_hat: np.ndarray
    Q_hat: np.ndarray
    u_hat: np.ndarray
    alpha: float
    delta: float
    known_features: bool
    sigma_d_true: float | None = None
    bound_value: float | None = None
    beta_true: np.ndarray | None = None
    Q_error: np.ndarray | None = None
    u_error: np.ndarray | None = None
    alpha_exact: float | None = None

    @property
    def admissible(self) -> bool:
        """Whether the bound's hypothesis holds (always true with known features)."""
        if self.known_features:
            return True
        return self.bound_value is not None and self.bound_value <= PROVISO

    @property
    def error(self) -> float | None:
        if self.beta_true is None:
            return None
        return float(np.linalg.norm(self.beta_hat - self.beta_true))

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        out["error"] = self.error
        out["admissible"] = self.admissible
        return out


def regression_bound(alpha: float, d: int, delta: float, sigma_d: float,
                     known_features: bool = False) -> float:
    if sigma_d <= 0:
        return math.inf
    if known_features:
        return math.sqrt(alpha * d / delta) / sigma_d
    return 3 * math.sqrt(alpha * d ** 3 / delta) / sigma_d ** 2


def least_squares_target(features: np.ndarray, labels: np.ndarray, target: Sequence[int]):
    """(Q, u, beta) computed directly from the target rows."""
    T = list(target)
    X, y = np.asarray(features, float)[T], np.asarray(labels, float)[T]
    Q = X.T @ X / len(T)
    u = X.T @ y / len(T)
    return Q, u, np.linalg.pinv(Q, rcond=PINV_RCOND, hermitian=True) @ u


class MeanMachinery:
    """One relaxation solve per distribution; weights for any query (A, B)."""

    def __init__(self, dist: ScenarioDistribution, mode: str = "full",
                 solver: SolverConfig | None = None, sampling: SamplingRunConfig | None = None,
                 samples: ScenarioDistribution | None = None):
        if mode == "full":
            est, bound = solve_full(dist, solver)
            self.V, self.alpha = est.V, bound
            self.estimator = est
        elif mode == "sampled":
            from .optimal import draw_scenarios
            sampling = sampling or SamplingRunConfig(t=10 * dist.m)
            if samples is None:
                samples = draw_scenarios(dist, sampling.t, sampling.rng_seed)
            sol = sampled_solution(samples, cfg=sampling, solver=solver)
            self.V, self.alpha = sol.V, sol.objective
            self.estimator = None
        else:
            raise ValueError(f"mode must be 'full' or 'sampled', got {mode!r}")
        self.mode = mode
        self.dist = dist

    def weights(self, sample, target) -> np.ndarray:
        return weights_from_V(self.V, sample, target)


def _solve(Q_hat, u_hat):
    s = np.linalg.svd(Q_hat, compute_uv=False)
    if s[-1] <= PINV_RCOND * max(s[0], 1e-300):
        raise IllConditionedError(float(s[-1]))
    return np.linalg.pinv(Q_hat, rcond=PINV_RCOND, hermitian=True) @ u_hat


def _as_rows(values, sample, n):
    """Accept a full n-row array or a dict {index: row} restricted to A."""
    if isinstance(values, dict):
        return {int(k): np.atleast_1d(np.asarray(v, float)) for k, v in values.items()}
    arr = np.asarray(values, float)
    if arr.shape[0] == n:
        return {j: np.atleast_1d(arr[j]) for j in sample}
    if arr.shape[0] == len(sample):
        return {j: np.atleast_1d(arr[i]) for i, j in enumerate(sample)}
    raise ValueError("observed data must have one row per sample index or per population index")


def _machinery(source, mode, solver, sampling) -> MeanMachinery:
    if isinstance(source, MeanMachinery):
        return source
    return MeanMachinery(source, mode, solver, sampling)


def fit(machinery: MeanMachinery | ScenarioDistribution, sample: Sequence[int],
        target: Sequence[int], features_A, labels_A, delta: float = 0.2,
        eval_data: tuple[np.ndarray, np.ndarray] | None = None, mode: str = "full",
        solver: SolverConfig | None = None,
        sampling: SamplingRunConfig | None = None) -> RegressionReport:
    """beta_hat = Q_hat^+ u_hat with every entry of Q and u mean-estimated.

    Pass a prepared ``MeanMachinery`` to reuse one solve across queries, or
    a distribution plus ``mode`` to solve here.  ``eval_data`` (full
    features, labels) is used only to report the true coefficients, sigma_d
    and the bound; it never enters the estimate.
    """
    machinery = _machinery(machinery, mode, solver, sampling)
    n = machinery.dist.n
    sample = sorted(int(j) for j in sample)
    X = _as_rows(features_A, sample, n)
    y = _as_rows(labels_A, sample, n)
    _check_bounded(X, y)
    w = machinery.weights(sample, target)
    d = len(next(iter(X.values()))) if X else 0
    if d < 1:
        raise ValueError("need at least one feature")
    Q_hat = np.zeros((d, d))
    u_hat = np.zeros(d)
    for j in sample:
        Q_hat += w[j] * np.outer(X[j], X[j])
        u_hat += w[j] * X[j] * y[j][0]
    Q_hat = (Q_hat + Q_hat.T) / 2
    beta = _solve(Q_hat, u_hat)
    rep = RegressionReport(beta, Q_hat, u_hat, machinery.alpha, delta, False)
    if eval_data is not None:
        Q, u, beta_true = least_squares_target(*eval_data, target)
        rep.sigma_d_true = float(np.linalg.svd(Q, compute_uv=False)[-1])
        rep.bound_value = regression_bound(rep.alpha, d, delta, rep.sigma_d_true)
        rep.beta_true, rep.Q_error, rep.u_error = beta_true, Q_hat - Q, u_hat - u
    return rep


def fit_known_features(machinery: MeanMachinery | ScenarioDistribution, sample: Sequence[int],
                       target: Sequence[int], features: np.ndarray, labels_A,
                       delta: float = 0.2, eval_labels: np.ndarray | None = None,
                       mode: str = "full", solver: SolverConfig | None = None,
                       sampling: SamplingRunConfig | None = None) -> RegressionReport:
    """Q from the known target features; only u = E_B[x y] is estimated."""
    machinery = _machinery(machinery, mode, solver, sampling)
    n = machinery.dist.n
    sample = sorted(int(j) for j in sample)
    features = np.asarray(features, float)
    if features.ndim == 1:
        features = features[:, None]
    if features.shape[0] != n:
        raise ValueError("known-features mode needs features for the whole population")
    y = _as_rows(labels_A, sample, n)
    _check_bounded({j: features[j] for j in range(n)}, y)
    T = list(target)
    Q = features[T].T @ features[T] / len(T)
    w = machinery.weights(sample, target)
    u_hat = np.zeros(features.shape[1])
    for j in sample:
        u_hat += w[j] * features[j] * y[j][0]
    beta = _solve(Q, u_hat)
    d = features.shape[1]
    rep = RegressionReport(beta, Q, u_hat, machinery.alpha, delta, True)
    rep.sigma_d_true = float(np.linalg.svd(Q, compute_uv=False)[-1])
    rep.bound_value = regression_bound(rep.alpha, d, delta, rep.sigma_d_true, known_features=True)
    if eval_labels is not None:
        _, u, beta_true = least_squares_target(features, eval_labels, target)
        rep.beta_true, rep.u_error = beta_true, u_hat - u
    return rep


def _check_bounded(X: dict, y: dict) -> None:
    for rows in (X, y):
        for v in rows.values():
            if np.any(np.abs(v) > 1 + 1e-12):
                raise ValueError("features and labels must be scaled into [-1, 1]")

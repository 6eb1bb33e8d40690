"""Concave maximization over the capped spectrahedron {V >= eps*I, diag(V) <= 1}.

Two objectives share one solver:

* linear:  <M, V>                        (relaxation of the PSD Grothendieck problem)
* Schur:   sum_i p_i b_i^T (V - V_A^T V_AA^{-1} V_A) b_i

Both are positively homogeneous, concave and nondecreasing in the Loewner
order, so an optimum has unit diagonal.  We therefore parametrize
``V = eps*I + (1 - eps) * U U^T`` with unit-norm rows of ``U`` (a product of
spheres) and run L-BFGS on the row-normalized factor.  The Schur objective
equals ``min_a sum_i p_i (a_i - b_i)^T V (a_i - b_i)``; its gradient is
``M(a*) = sum_i p_i (a*_i - b_i)(a*_i - b_i)^T`` and ``f(V') <= <M(a*), V'>``
for every feasible ``V'``, which turns the dual of the linear problem into
an optimality certificate for both objectives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .scenarios import ScenarioDistribution

log = logging.getLogger(__name__)

PINV_RCOND = 1e-10
# With a zero floor the pseudoinverse objective jumps wherever a sample block
# turns singular, which defeats any gradient method.  We optimize with this
# tiny floor instead (it costs at most its own size in objective) and still
# certify against the zero-floor feasible set.
ZERO_FLOOR_SURROGATE = 1e-7


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SolverConfig:
    eig_floor: float = 1e-6
    rel_tol: float = 1e-6
    max_iters: int = 20000
    rng_seed: int = 0
    restarts: int = 2
    round_iters: int = 1000

    def __post_init__(self):
        if not 0 <= self.eig_floor < 1:
            raise ValueError(f"eig_floor must lie in [0, 1), got {self.eig_floor}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class SpectralSolution:
    V: np.ndarray
    objective: float
    residual: float
    iterations: int
    upper: float
    gradient: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)


class ScenarioBlocks:
    """Scenario list grouped by sample size for batched block solves."""

    def __init__(self, n: int, samples: Sequence[Sequence[int]], targets: np.ndarray,
                 probs: np.ndarray):
        self.n = n
        self.targets = np.asarray(targets, dtype=float)
        self.probs = np.asarray(probs, dtype=float)
        self.m = len(samples)
        by_size: dict[int, list[int]] = {}
        for i, a in enumerate(samples):
            by_size.setdefault(len(a), []).append(i)
        self.groups = []
        for s, rows in sorted(by_size.items()):
            rows = np.array(rows, dtype=int)
            idx = np.array([sorted(samples[i]) for i in rows], dtype=int).reshape(len(rows), s)
            self.groups.append((rows, idx))

    @classmethod
    def from_distribution(cls, dist: ScenarioDistribution) -> "ScenarioBlocks":
        return cls(dist.n, [s.sample for s in dist.scenarios], dist.target_matrix(), dist.probs)

    def weights(self, V: np.ndarray, pseudo: bool = False) -> np.ndarray:
        """Minimizing weights a_i = V_AA^{-1} V_A b_i, zero off A_i (rows of the result)."""
        a = np.zeros((self.m, self.n))
        for rows, idx in self.groups:
            if idx.shape[1] == 0:
                continue
            Vaa = V[idx[:, :, None], idx[:, None, :]]
            rhs = np.einsum("ksn,kn->ks", V[idx], self.targets[rows])
            if pseudo:
                sol = np.einsum("kst,kt->ks", np.linalg.pinv(Vaa, rcond=PINV_RCOND, hermitian=True), rhs)
            else:
                sol = np.linalg.solve(Vaa, rhs[..., None])[..., 0]
            a[rows[:, None], idx] = sol
        return a

    def terms(self, V: np.ndarray, pseudo: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Per-scenario Schur terms and the residual vectors c_i = a_i - b_i."""
        c = self.weights(V, pseudo) - self.targets
        return np.einsum("kn,kn->k", c @ V, c), c

    def objective(self, V: np.ndarray, pseudo: bool = False) -> float:
        t, _ = self.terms(V, pseudo)
        return float(self.probs @ t)

    def gradient(self, V: np.ndarray, pseudo: bool = False) -> np.ndarray:
        _, c = self.terms(V, pseudo)
        return (c * self.probs[:, None]).T @ c


def grothendieck_dual_bound(M: np.ndarray, G: np.ndarray | None = None) -> float:
    """Upper bound on max{<M, G'> : G' psd, diag(G') <= 1} from a dual-feasible y.

    ``y`` is read off the candidate primal ``G`` (y_j = (M G)_jj), shifted
    until Diag(y) - M is PSD and clipped at zero; then the bound is sum(y).
    """
    n = M.shape[0]
    if G is None:
        G = np.eye(n)
    y = np.einsum("jk,kj->j", M, G)
    lam = np.linalg.eigvalsh(np.diag(y) - M)[0]
    if lam < 0:
        y = y - lam
    y = np.maximum(y, 0.0)
    # the eigenvalue shift carries roundoff of order n * eps * ||M||
    return float(y.sum() + 4 * n * np.finfo(float).eps * max(1.0, np.abs(M).sum()))


def _certificate(G: np.ndarray, U: np.ndarray, eps: float, cert_eps: float) -> float:
    """Dual bound over {V >= cert_eps*I, diag <= 1} seeded by the current iterate."""
    if cert_eps == eps:
        return float(eps * np.trace(G) + (1 - eps) * grothendieck_dual_bound(G, U @ U.T))
    V = eps * np.eye(len(U)) + (1 - eps) * (U @ U.T)
    return grothendieck_dual_bound(G, V)


def _refined_certificate(G: np.ndarray, U: np.ndarray, cert_eps: float,
                         iters: int = 500) -> float:
    """Tighter dual bound: first push U toward the maximizer of <G, V>.

    The seeded bound errs to first order in the distance between the iterate
    and that maximizer, while G itself is only second-order off, so a short
    warm-started linear solve usually closes most of the gap.
    """
    n, r = U.shape

    def negated(w):
        W = w.reshape(n, r)
        norms = np.linalg.norm(W, axis=1, keepdims=True)
        Uw = W / norms
        GU = G @ Uw
        gU = 2 * GU
        gW = (gU - np.sum(gU * Uw, axis=1, keepdims=True) * Uw) / norms
        return -float(np.sum(GU * Uw)), -gW.ravel()

    res = minimize(negated, U.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": iters, "maxcor": 30, "ftol": 1e-16, "gtol": 1e-14})
    W = res.x.reshape(n, r)
    Ur = W / np.linalg.norm(W, axis=1, keepdims=True)
    return _certificate(G, Ur, cert_eps, cert_eps)


def _maximize(fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]], n: int,
              cfg: SolverConfig, floor: float | None = None) -> SpectralSolution:
    """``floor`` overrides the parametrization floor; the certificate always
    refers to ``cfg.eig_floor``."""
    eps = cfg.eig_floor if floor is None else floor
    eye = np.eye(n)

    def assemble(U):
        return eps * eye + (1 - eps) * (U @ U.T)

    def negated(w, r):
        W = w.reshape(n, r)
        norms = np.linalg.norm(W, axis=1, keepdims=True)
        U = W / norms
        f, G = fun_grad(assemble(U))
        gU = 2 * (1 - eps) * (G @ U)
        gW = (gU - np.sum(gU * U, axis=1, keepdims=True) * U) / norms
        return -f, -gW.ravel()

    rng = np.random.default_rng(cfg.rng_seed)
    starts = [np.eye(n)]
    best = None
    total = 0
    for attempt in range(cfg.restarts + 1):
        if attempt > 0:
            starts.append(rng.standard_normal((n, n + 1)))
        W = starts[attempt]
        r = W.shape[1]
        stalled = 0
        while True:
            res = minimize(negated, W.ravel(), args=(r,), jac=True, method="L-BFGS-B",
                           options={"maxiter": max(1, min(cfg.round_iters, cfg.max_iters - total)),
                                    "maxcor": 30,
                                    "ftol": 1e-16, "gtol": 1e-14})
            total += max(res.nit, 1)
            W = res.x.reshape(n, r)
            U = W / np.linalg.norm(W, axis=1, keepdims=True)
            V = assemble(U)
            f, G = fun_grad(V)
            upper = _certificate(G, U, eps, cfg.eig_floor)
            if upper - f > cfg.rel_tol * max(1.0, abs(f)):
                upper = min(upper, _refined_certificate(G, U, cfg.eig_floor))
            gap = upper - f
            sol = SpectralSolution(V, float(f), float(max(gap, 0.0)), total, upper, G, U)
            if best is None or sol.residual < best.residual:
                best = sol
            if gap <= cfg.rel_tol * max(1.0, abs(f)):
                return sol
            if total >= cfg.max_iters:
                break
            # L-BFGS stops on its own line-search tolerances; a fresh
            # history from the renormalized point usually resumes progress.
            stalled = stalled + 1 if res.nit <= 1 else 0
            if stalled >= 3:
                break
            W = U
        log.info("solver attempt %d ended with certified gap %.3e", attempt, best.residual)
        if total >= cfg.max_iters:
            break
    raise SolverError("iteration budget exhausted before certification", best.residual)


def solve_linear(M: np.ndarray, cfg: SolverConfig | None = None) -> SpectralSolution:
    """max <M, V> over {V >= eps*I, diag(V) <= 1} for symmetric PSD ``M``."""
    cfg = cfg or SolverConfig(eig_floor=0.0)
    M = np.asarray(M, dtype=float)
    M = (M + M.T) / 2
    return _maximize(lambda V: (float(np.sum(M * V)), M), M.shape[0], cfg)


def solve_schur(blocks: ScenarioBlocks | ScenarioDistribution,
                cfg: SolverConfig | None = None) -> SpectralSolution:
    """Maximize the probability-weighted Schur objective over the capped spectrahedron."""
    cfg = cfg or SolverConfig()
    if isinstance(blocks, ScenarioDistribution):
        # repeated scenarios only add their probabilities
        blocks = ScenarioBlocks.from_distribution(blocks.merged())

    def fun_grad(V):
        t, c = blocks.terms(V)
        return float(blocks.probs @ t), (c * blocks.probs[:, None]).T @ c

    return _maximize(fun_grad, blocks.n, cfg, cfg.eig_floor or ZERO_FLOOR_SURROGATE)

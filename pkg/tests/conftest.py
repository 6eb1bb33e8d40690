import numpy as np
import pytest

from wcrc.scenarios import Scenario, ScenarioDistribution


def example6() -> ScenarioDistribution:
    """Four points; three scenarios at 0.3 and two at 0.05 (0-based indices)."""
    return ScenarioDistribution(4, (
        Scenario([0, 2], [1, 3], 0.3),
        Scenario([1, 3], [0, 2], 0.3),
        Scenario([2, 3], [0, 1], 0.3),
        Scenario([0, 2, 3], [1], 0.05),
        Scenario([1, 2, 3], [0], 0.05),
    ))


@pytest.fixture
def ex6():
    return example6()


def random_distribution(rng: np.random.Generator, n: int, m: int,
                        allow_empty: bool = True) -> ScenarioDistribution:
    scen = []
    w = rng.random(m) + 0.1
    w /= w.sum()
    for i in range(m):
        k = int(rng.integers(0 if allow_empty else 1, n))
        A = rng.choice(n, size=k, replace=False).tolist()
        B = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist()
        scen.append(Scenario(A, B, float(w[i])))
    # renormalize the last probability against float drift
    total = sum(s.prob for s in scen[:-1])
    scen[-1] = Scenario(scen[-1].sample, scen[-1].target, 1.0 - total)
    return ScenarioDistribution(n, tuple(scen))


def random_estimator_weights(rng: np.random.Generator, dist: ScenarioDistribution,
                             scale: float = 1.0) -> np.ndarray:
    w = np.zeros((dist.m, dist.n))
    for i, s in enumerate(dist.scenarios):
        if s.sample:
            w[i, list(s.sample)] = scale * rng.normal(size=len(s.sample)) / len(s.sample)
    return w


def random_feasible_V(rng, n, eps=0.0, interior=False):
    """eps*I + (1-eps) * D^1/2 C D^1/2 with C a correlation matrix, D <= 1."""
    W = rng.normal(size=(n, int(rng.integers(1, n + 2))))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    scale = rng.uniform(0.3, 0.9 if interior else 1.0, n)
    C = (W * np.sqrt(scale)[:, None]) @ (W * np.sqrt(scale)[:, None]).T
    if interior:
        C += 0.05 * np.eye(n)
    return eps * np.eye(n) + (1 - eps) * C


def random_psd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    G = rng.normal(size=(n, rank or n))
    return G @ G.T / n


# --- independent interior-point oracle (test-only) -------------------------

def cvx_linear(M, eps=0.0):
    import cvxpy as cp
    n = M.shape[0]
    V = cp.Variable((n, n), symmetric=True)
    cons = [V >> eps * np.eye(n), cp.diag(V) <= 1]
    prob = cp.Problem(cp.Maximize(cp.trace(M @ V)), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


def cvx_schur(dist: ScenarioDistribution, eps=0.0):
    """Epigraph form: t_i <= b^T V b - (V_A b)^T V_AA^{-1} (V_A b) via a Schur block."""
    import cvxpy as cp
    n = dist.n
    V = cp.Variable((n, n), symmetric=True)
    t = cp.Variable(dist.m)
    cons = [V >> eps * np.eye(n), cp.diag(V) <= 1]
    B = dist.target_matrix()
    for i, s in enumerate(dist.scenarios):
        A = list(s.sample)
        b = B[i]
        if not A:
            cons.append(t[i] <= b @ V @ b)
            continue
        col = cp.reshape(V[A, :] @ b, (len(A), 1), order="F")
        corner = cp.reshape(b @ V @ b - t[i], (1, 1), order="F")
        blk = cp.bmat([[V[A][:, A], col], [col.T, corner]])
        cons.append((blk + blk.T) / 2 >> 0)
    prob = cp.Problem(cp.Maximize(dist.probs @ t), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


# --- acceptance report ------------------------------------------------------

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance_log(request):
    """Append (criterion, passed, detail); lines are echoed in the terminal summary."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(criterion: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
        lines.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import (cvx_schur, example6, random_distribution, random_feasible_V,
                      random_psd)
from wcrc.sdp import (ScenarioBlocks, SolverConfig, SolverError, grothendieck_dual_bound,
                      solve_linear, solve_schur)
from wcrc.scenarios import ScenarioDistribution


def check_feasible(V, eps):
    assert np.allclose(V, V.T)
    assert np.linalg.eigvalsh(V)[0] >= eps - 1e-8
    assert np.diag(V).max() <= 1 + 1e-8


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eig_floor=1.0)
    with pytest.raises(ValueError):
        SolverConfig(eig_floor=-0.1)
    with pytest.raises(ValueError):
        SolverConfig(rel_tol=0)
    assert SolverConfig().eig_floor == 1e-6 and SolverConfig().rel_tol == 1e-6


def test_linear_examples():
    sol = solve_linear(np.eye(5))
    assert sol.objective == pytest.approx(5, abs=1e-6)
    c = np.ones(2)
    assert solve_linear(np.outer(c, c)).objective == pytest.approx(4, abs=1e-6)
    sol = solve_linear(np.eye(2), SolverConfig(eig_floor=0.5))
    assert sol.objective == pytest.approx(2, abs=1e-6)
    check_feasible(sol.V, 0.5)


def test_linear_certificate_brackets_optimum():
    rng = np.random.default_rng(0)
    M = random_psd(rng, 8, rank=2)
    sol = solve_linear(M)
    assert sol.objective <= sol.upper + 1e-12
    assert sol.upper - sol.objective <= 1e-6 * max(1, sol.objective)
    assert grothendieck_dual_bound(M) >= sol.objective


def test_iteration_budget_error_carries_residual():
    d = random_distribution(np.random.default_rng(4), 8, 10)
    with pytest.raises(SolverError) as e:
        solve_schur(d, SolverConfig(max_iters=1, restarts=0, rel_tol=1e-12))
    assert e.value.residual > 0


def test_schur_full_observation_is_zero():
    d = ScenarioDistribution.uniform(4, [([0, 1, 2, 3], [1, 2]), ([1, 2], [1])])
    assert solve_schur(d, SolverConfig(eig_floor=0.0)).objective == pytest.approx(0, abs=1e-9)
    assert solve_schur(d).objective == pytest.approx(0, abs=1e-9)


def test_schur_nothing_observed():
    d = ScenarioDistribution.uniform(1, [([], [0])])
    sol = solve_schur(d, SolverConfig(eig_floor=0.0))
    assert sol.objective == pytest.approx(1, abs=1e-9)
    np.testing.assert_allclose(sol.V, [[1.0]])


def test_schur_example6():
    sol = solve_schur(example6(), SolverConfig(eig_floor=1e-4))
    assert 0.6652 - 1e-3 <= sol.objective <= math.pi / 2 * 0.6652 + 1e-3
    check_feasible(sol.V, 1e-4)


@pytest.mark.parametrize("seed,eps", [(0, 0.0), (1, 1e-3), (2, 1e-2), (3, 0.0)])
def test_schur_matches_interior_point_oracle(seed, eps):
    d = random_distribution(np.random.default_rng(seed), 6, 7)
    sol = solve_schur(d, SolverConfig(eig_floor=eps))
    ref = cvx_schur(d, eps)
    assert sol.objective == pytest.approx(ref, abs=2e-6)
    assert sol.objective <= sol.upper + 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_solutions_feasible(seed):
    rng = np.random.default_rng(seed)
    for eps in (0.0, 1e-3, 0.2):
        sol = solve_schur(random_distribution(rng, 7, 9), SolverConfig(eig_floor=eps))
        check_feasible(sol.V, eps)


def test_concavity_witness():
    rng = np.random.default_rng(8)
    d = random_distribution(rng, 6, 8)
    cfg = SolverConfig(eig_floor=1e-3)
    blocks = ScenarioBlocks.from_distribution(d)
    V = solve_schur(blocks, cfg).V
    for _ in range(20):
        W = random_feasible_V(rng, 6, eps=1e-3)
        mid = blocks.objective((V + W) / 2)
        assert mid >= (blocks.objective(V) + blocks.objective(W)) / 2 - cfg.rel_tol


@pytest.mark.parametrize("seed", range(3))
def test_floor_costs_at_most_eps(seed):
    d = random_distribution(np.random.default_rng(seed), 5, 6)
    base = solve_schur(d, SolverConfig(eig_floor=0.0)).objective
    for eps in (1e-3, 0.05):
        sol = solve_schur(d, SolverConfig(eig_floor=eps))
        assert sol.objective >= base - eps - 1e-6
        assert sol.objective <= base + 1e-6


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    for k in range(10):
        n = int(rng.integers(3, 9))
        blocks = ScenarioBlocks.from_distribution(random_distribution(rng, n, 6))
        V = random_feasible_V(rng, n, interior=True)
        G = blocks.gradient(V)
        D = rng.normal(size=(n, n))
        D = (D + D.T) / 2
        h = 1e-6
        fd = (blocks.objective(V + h * D) - blocks.objective(V - h * D)) / (2 * h)
        assert fd == pytest.approx(np.sum(G * D), rel=1e-4, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_schur_terms_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    blocks = ScenarioBlocks.from_distribution(random_distribution(rng, n, 10))
    V = random_feasible_V(rng, n, eps=float(rng.choice([0.0, 1e-3])))
    terms, _ = blocks.terms(V, pseudo=True)
    assert np.all(terms >= -1e-10) and np.all(terms <= 1 + 1e-10)


def test_pseudoinverse_on_singular_block():
    # V = all ones is singular on any block of size 2; the term is still defined
    d = ScenarioDistribution.uniform(3, [([0, 1], [2])])
    blocks = ScenarioBlocks.from_distribution(d)
    terms, c = blocks.terms(np.ones((3, 3)), pseudo=True)
    assert terms[0] == pytest.approx(0, abs=1e-12)
    np.testing.assert_allclose(c[0, :2], [0.5, 0.5])


def test_deterministic():
    d = random_distribution(np.random.default_rng(9), 6, 8)
    a = solve_schur(d, SolverConfig(eig_floor=1e-3))
    b = solve_schur(d, SolverConfig(eig_floor=1e-3))
    assert a.objective == b.objective and np.array_equal(a.V, b.V)

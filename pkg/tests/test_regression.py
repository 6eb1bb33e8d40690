import math

import numpy as np
import pytest

from conftest import random_distribution
from wcrc.optimal import SamplingRunConfig
from wcrc.regression import (PROVISO, IllConditionedError, MeanMachinery, fit,
                             fit_known_features, least_squares_target, regression_bound)
from wcrc.samplers import ImportanceConfig, gen_importance
from wcrc.scenarios import ScenarioDistribution


@pytest.fixture(scope="module")
def machinery():
    return MeanMachinery(gen_importance(ImportanceConfig([0.6] * 8, 300, 0)))


def synthetic(rng, n, beta=(0.3, 0.4), noise=0.1):
    X = np.c_[np.ones(n), rng.choice([-1.0, 1.0], n)]
    y = np.clip(X @ np.array(beta) + noise * rng.normal(size=n), -1, 1)
    return X, y


def test_bound_formulas():
    assert regression_bound(1e-4, 2, 0.2, 0.5) == pytest.approx(3 * math.sqrt(1e-4 * 8 / 0.2) / 0.25)
    assert regression_bound(1e-4, 2, 0.2, 0.5, known_features=True) == pytest.approx(
        math.sqrt(1e-4 * 2 / 0.2) / 0.5)
    assert regression_bound(1e-4, 2, 0.2, 0.0) == math.inf


def test_intercept_only_is_scalar_mean(machinery):
    rng = np.random.default_rng(0)
    y = rng.uniform(-1, 1, 8)
    A, B = [0, 2, 3, 6], [1, 2, 5, 7]
    rep = fit(machinery, A, B, np.ones((4, 1)), y[A])
    w = machinery.weights(A, B)
    # Q = 1 is itself mean-estimated, so the estimate is a ratio of two
    # scalar mean estimates; it equals the plain one when the weights sum to 1
    assert rep.Q_hat[0, 0] == pytest.approx(w.sum(), abs=1e-12)
    assert rep.beta_hat[0] == pytest.approx((w[A] @ y[A]) / w.sum(), abs=1e-12)
    rep_k = fit_known_features(machinery, A, B, np.ones(8), y[A])
    assert rep_k.beta_hat[0] == pytest.approx(w[A] @ y[A], abs=1e-12)


def test_perfect_coverage_recovers_target_coefficients():
    rng = np.random.default_rng(1)
    d = ScenarioDistribution.uniform(10, [(range(10), range(10)), (range(10), [0, 3, 4, 8, 9])])
    X, y = synthetic(rng, 10)
    for B in (range(10), [0, 3, 4, 8, 9]):
        rep = fit(d, range(10), B, X, y, eval_data=(X, y))
        np.testing.assert_allclose(rep.beta_hat, rep.beta_true, atol=1e-9)
        np.testing.assert_allclose(rep.Q_hat, least_squares_target(X, y, B)[0], atol=1e-9)


def test_zero_labels_give_zero_coefficients(machinery):
    rng = np.random.default_rng(2)
    X, _ = synthetic(rng, 8)
    rep = fit_known_features(machinery, [0, 1, 4, 5], range(8), X, np.zeros(4))
    assert np.all(rep.beta_hat == 0)


def test_report_invariants(machinery):
    rng = np.random.default_rng(3)
    X, y = synthetic(rng, 8)
    A = [0, 1, 2, 4, 5, 7]
    rep = fit(machinery, A, range(8), X[A], y[A], eval_data=(X, y))
    np.testing.assert_array_equal(rep.Q_hat, rep.Q_hat.T)
    np.testing.assert_allclose(rep.beta_hat, np.linalg.pinv(rep.Q_hat) @ rep.u_hat, atol=1e-10)
    np.testing.assert_allclose(rep.Q_error, rep.Q_hat - least_squares_target(X, y, range(8))[0])
    assert rep.alpha == machinery.alpha
    assert rep.admissible == (rep.bound_value <= PROVISO)
    out = rep.to_dict()
    assert set(out) >= {"beta_hat", "Q_hat", "u_hat", "bound_value", "error", "admissible"}


def test_permuting_features_permutes_coefficients(machinery):
    rng = np.random.default_rng(4)
    X = np.c_[np.ones(8), rng.uniform(-1, 1, 8), rng.choice([-1.0, 1.0], 8)]
    y = rng.uniform(-1, 1, 8)
    A = [0, 1, 2, 3, 5, 6]
    perm = [2, 0, 1]
    a = fit(machinery, A, range(8), X[A], y[A]).beta_hat
    b = fit(machinery, A, range(8), X[A][:, perm], y[A]).beta_hat
    np.testing.assert_allclose(b, a[perm], atol=1e-10)


def test_ill_conditioned(machinery):
    X = np.c_[np.ones(8), np.ones(8)]
    with pytest.raises(IllConditionedError, match="ill-conditioned") as e:
        fit(machinery, [0, 1, 2], range(8), X[:3], np.zeros(3))
    assert e.value.sigma_min >= 0


def test_input_validation(machinery):
    with pytest.raises(ValueError, match="scaled"):
        fit(machinery, [0, 1], range(8), np.array([[1.0, 2.0], [1.0, 0.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        fit(machinery, [0, 1], range(8), np.ones((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        fit_known_features(machinery, [0, 1], range(8), np.ones((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        MeanMachinery(machinery.dist, mode="other")


def test_sampled_mode_close_to_full():
    rng = np.random.default_rng(5)
    d = random_distribution(rng, 6, 5, allow_empty=False)
    X, y = synthetic(rng, 6, noise=0.0)
    X[:2, 1] = [1.0, -1.0]
    A = [0, 1, 3]
    full = MeanMachinery(d, "full")
    sampled = MeanMachinery(d, "sampled", sampling=SamplingRunConfig(t=200, eps=1e-3, rng_seed=1))
    assert sampled.estimator is None and sampled.V.shape == (6, 6)
    r1 = fit_known_features(full, A, range(6), X, y[A])
    r2 = fit_known_features(sampled, A, range(6), X, y[A])
    assert np.all(np.isfinite(r2.beta_hat)) and r1.beta_hat.shape == r2.beta_hat.shape

from types import SimpleNamespace

import numpy as np
import pytest

from ncsched import lqr
from ncsched.harness.baselines import (OracleGreedyPolicy, StabilityWeightedPolicy, UniformRandomPolicy,
                                       lookahead_objective, lookahead_objective_bruteforce, make_baseline,
                                       oracle_greedy, stability_weights)
from ncsched.plant import lqr_gain

from conftest import diagonal_plant


def _frequencies(policy, n=30_000, N=2):
    rng = np.random.default_rng(0)
    picks = np.concatenate([policy.act(None, None, rng) for _ in range(n // policy.M)])
    return np.bincount(picks - 1, minlength=N) / picks.size


def test_stability_weights_two_to_one():
    p = diagonal_plant([np.diag([0.6, 0.3]), np.diag([1.2, 0.5])])
    np.testing.assert_allclose(stability_weights(p), [1 / 3, 2 / 3])
    np.testing.assert_allclose(_frequencies(StabilityWeightedPolicy(p, 3)), [1 / 3, 2 / 3], atol=0.01)


def test_stability_weights_floor():
    p = diagonal_plant([np.diag([0.05, 0.01]), np.diag([1.2, 0.5])])
    w = stability_weights(p)
    assert w[1] / w[0] == pytest.approx(12.0)
    np.testing.assert_allclose(_frequencies(StabilityWeightedPolicy(p, 2)), w, atol=0.01)


def test_symmetric_weights_are_uniform():
    p = diagonal_plant([np.diag([0.8, 0.1])] * 3)
    np.testing.assert_allclose(stability_weights(p), 1 / 3)
    np.testing.assert_allclose(_frequencies(UniformRandomPolicy(3, 2), N=3), 1 / 3, atol=0.01)


def test_objective_matches_pattern_sum(small_plant):
    rng = np.random.default_rng(0)
    K, _ = lqr_gain(small_plant)
    for _ in range(5):
        x, u, q = rng.standard_normal(6), rng.standard_normal(3), rng.uniform(0, 1, 3)
        assert lookahead_objective(small_plant, x, K, q, u) == pytest.approx(
            lookahead_objective_bruteforce(small_plant, x, K, q, u), rel=1e-12)


def test_oracle_against_brute_force():
    p = diagonal_plant([np.diag([0.9, 0.2]), np.diag([1.1, 0.4])])
    K, _ = lqr_gain(p)
    probs = [0.9, 0.6]
    rng = np.random.default_rng(1)
    policy = OracleGreedyPolicy(p, probs)
    ctl = SimpleNamespace(K_inf=K)
    for _ in range(20):
        x = rng.standard_normal(4) * 3
        vals = {}
        for a in [(1, 1), (1, 2), (2, 1), (2, 2)]:
            q = lqr.closure_probs_for_action(a, probs, 2)
            u = -lqr.lookahead_gain(p, K, q) @ x
            vals[a] = lookahead_objective_bruteforce(p, x, K, q, u)
        best = min(vals, key=vals.get)
        assert vals[oracle_greedy(p, x, K, probs)] == pytest.approx(vals[best], rel=1e-12)
        assert vals[policy.act(x, ctl)] == pytest.approx(vals[best], rel=1e-12)


def test_single_channel_serves_unstable_subsystem():
    p = diagonal_plant([np.diag([0.5, 0.4]), np.diag([1.4, 0.3])])
    K, _ = lqr_gain(p)
    x = np.array([0.1, 0.1, 5.0, 0.0])
    assert oracle_greedy(p, x, K, [0.9]) == (2,)
    assert OracleGreedyPolicy(p, [0.9]).act(x, SimpleNamespace(K_inf=K)) == (2,)


def test_make_baseline(small_plant):
    assert make_baseline("uniform-random", small_plant, [0.9], 1).name == "uniform-random"
    with pytest.raises(ValueError):
        make_baseline("perfect-comm-lqr", small_plant, [0.9], 1)
    with pytest.raises(ValueError):
        OracleGreedyPolicy(small_plant, [0.9] * 20)

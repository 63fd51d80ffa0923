import numpy as np
import pytest

from olts import (EnvironmentHandle, ModelViolationError, NonStationaryPolicy, TabularMDP,
                  extend_policy, policy_value, reduce_initial_distribution, sample_episode,
                  validate)
from olts.generators import chain_mdp, random_mdp, random_policies


def test_chain_episode_sums_to_one():
    H = 7
    env = EnvironmentHandle(chain_mdp(H), seed=0)
    z = sample_episode(env, NonStationaryPolicy.constant(H, 1, 0))
    assert z.cumulative_reward == pytest.approx(1.0, abs=1e-12)
    assert z.horizon == H and len(z.states) == H + 1
    assert env.episodes_sampled == 1


def test_bandit_single_record():
    mdp = TabularMDP.from_arrays(np.ones((1, 2, 1)), np.array([[0.7, 0.1]]), 1)
    z = sample_episode(EnvironmentHandle(mdp, 1), NonStationaryPolicy.constant(1, 1, 0))
    assert z.records() == [(0, 0, 0.7)]


def test_transition_frequency():
    P = np.array([[[0.7, 0.3]], [[0.0, 1.0]]])
    mdp = TabularMDP.from_arrays(P, np.zeros((2, 1)), 2)
    env = EnvironmentHandle(mdp, 3)
    states, _, _ = env.sample_episodes(np.zeros((2, 2), dtype=np.int64), np.zeros(100_000, dtype=int))
    assert abs(np.mean(states[:, 1] == 1) - 0.3) <= 0.01
    assert env.episodes_sampled == 100_000


def test_episode_accounting_and_seed_determinism():
    mdp = random_mdp(3, 2, 6, np.random.default_rng(0), stochastic_rewards=True)
    pols = random_policies(5, 3, 2, 6, np.random.default_rng(1))
    a, b = EnvironmentHandle(mdp, 42), EnvironmentHandle(mdp, 42)
    for k, p in enumerate(pols * 3, start=1):
        assert sample_episode(a, p) == sample_episode(b, p)
        assert a.episodes_sampled == k


def test_spawned_children_count_against_parent():
    env = EnvironmentHandle(chain_mdp(3), 0)
    kids = env.spawn(3)
    pol = NonStationaryPolicy.constant(3, 1, 0)
    kids[0].sample_episode(pol)
    kids[2].sample_episodes(pol.table, np.zeros(4, dtype=int))
    assert [k.episodes_sampled for k in kids] == [1, 0, 4]
    assert env.episodes_sampled == 5


def test_reward_sum_violation_raises():
    mdp = chain_mdp(4, reward=0.5)
    with pytest.raises(ModelViolationError):
        sample_episode(EnvironmentHandle(mdp, 0), NonStationaryPolicy.constant(4, 1, 0))


def test_validate_tolerance_and_violations():
    P = np.array([[[0.999999999]]])
    assert validate(TabularMDP.from_arrays(P, np.zeros((1, 1)), 2)) == []
    bad = validate(TabularMDP.from_arrays(np.array([[[1.01]]]), np.zeros((1, 1)), 2))
    assert len(bad) == 1 and "sums to" in bad[0]
    neg = validate(TabularMDP.from_arrays(np.ones((1, 1, 1)), np.array([[-0.1]]), 2))
    assert any("negative reward" in v for v in neg)


def test_validate_does_not_renormalize():
    P = np.array([[[0.5, 0.51]], [[0.0, 1.0]]])
    mdp = TabularMDP.from_arrays(P, np.zeros((2, 1)), 2)
    assert validate(mdp)
    assert mdp.transitions[0, 0, 1] == 0.51


def test_policy_shape_checks():
    mdp = chain_mdp(3)
    with pytest.raises(ValueError):
        NonStationaryPolicy.constant(2, 1, 0).check_compatible(mdp)
    with pytest.raises(ValueError):
        NonStationaryPolicy.constant(3, 1, 1).check_compatible(mdp)
    with pytest.raises(ValueError):
        NonStationaryPolicy(np.array([[-1]]))


def test_distribution_initial_needs_reduction():
    mdp = TabularMDP.from_arrays(np.full((2, 1, 2), 0.5), np.zeros((2, 1)), 2, [0.5, 0.5])
    with pytest.raises(ValueError):
        EnvironmentHandle(mdp, 0)


def _with_initial(mdp, mu):
    return TabularMDP(mdp.transitions, mdp.reward_support, mdp.reward_probs, mdp.horizon, mu)


def test_reduction_point_mass():
    base = random_mdp(2, 2, 4, np.random.default_rng(5))
    red = reduce_initial_distribution(_with_initial(base, [1.0, 0.0]))
    assert red.horizon == 5 and red.initial == 2
    np.testing.assert_array_equal(red.transitions[:2, :, :2], base.transitions)
    for p in random_policies(10, 2, 2, 4, np.random.default_rng(6)):
        assert policy_value(red, extend_policy(p)).root_value == pytest.approx(
            policy_value(base, p).root_value, abs=1e-12)


def test_reduction_preserves_values():
    rng = np.random.default_rng(7)
    for _ in range(20):
        base = random_mdp(3, 2, 5, rng)
        mu = rng.dirichlet(np.ones(3))
        mu[rng.integers(3)] = 0.0
        mu /= mu.sum()
        orig = _with_initial(base, mu)
        red = reduce_initial_distribution(orig)
        assert validate(red) == []
        np.testing.assert_array_equal(red.transitions[3, 0, :3], mu)
        for p in random_policies(5, 3, 2, 5, rng):
            want = float(mu @ policy_value(base, p).V[0])
            for a in range(2):
                got = policy_value(red, extend_policy(p, a)).root_value
                assert got == pytest.approx(want, abs=1e-12)
            assert policy_value(orig, p).root_value == pytest.approx(want, abs=1e-12)


def test_models_are_immutable():
    mdp = chain_mdp(3)
    with pytest.raises(ValueError):
        mdp.transitions[0, 0, 0] = 0.5

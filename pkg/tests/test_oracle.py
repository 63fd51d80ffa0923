import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_pmf, brute_value
from olts import (EnvironmentHandle, NonStationaryPolicy, TabularMDP, admissible_mask,
                  admissible_pairs, mu_potential, mu_potential_table, optimal_policy,
                  policy_value, visit_count_pmf, visit_count_pmfs)
from olts.generators import chain_mdp, exhaustive_policies, random_mdp, random_policies
from olts.oracle import state_distributions

seeds = st.integers(0, 2**32 - 1)


def _example_h2():
    # s0 --a0--> s1 w.p. 0.3; rewards r(s0,a0)=0.2, r(s0,a1)=0.1, r(s1,.)=0.5
    P = np.array([[[0.7, 0.3], [0.7, 0.3]], [[0.0, 1.0], [0.0, 1.0]]])
    R = np.array([[0.2, 0.1], [0.5, 0.5]])
    mdp = TabularMDP.from_arrays(P, R, 2)
    return mdp, NonStationaryPolicy(np.array([[0, 0], [1, 1]]))


def test_two_step_hand_example():
    mdp, pi = _example_h2()
    vt = policy_value(mdp, pi)
    assert vt.root_value == pytest.approx(0.42, abs=1e-12)
    assert brute_value(mdp, pi) == pytest.approx(0.42, abs=1e-12)
    env = EnvironmentHandle(mdp, 0)
    _, _, r = env.sample_episodes(pi.table, np.zeros(100_000, dtype=int))
    assert abs(r.sum(axis=1).mean() - 0.42) <= 4 * np.sqrt(1 / (4 * 100_000))


def test_chain_and_zero_rewards():
    assert policy_value(chain_mdp(9), NonStationaryPolicy.constant(9, 1, 0)).root_value == \
        pytest.approx(1.0)
    mdp = random_mdp(3, 2, 4, np.random.default_rng(0))
    zero = TabularMDP.from_arrays(mdp.transitions, np.zeros((3, 2)), 4)
    for p in random_policies(10, 3, 2, 4, np.random.default_rng(1)):
        assert policy_value(zero, p).root_value == 0.0


def test_monte_carlo_agreement():
    rng = np.random.default_rng(2)
    N = 100_000
    for i in range(3):
        mdp = random_mdp(3, 2, 6, rng, stochastic_rewards=True)
        pi = random_policies(1, 3, 2, 6, rng)[0]
        _, _, r = EnvironmentHandle(mdp, i).sample_episodes(pi.table, np.zeros(N, dtype=int))
        assert abs(r.sum(axis=1).mean() - policy_value(mdp, pi).root_value) <= 4 * np.sqrt(1 / (4 * N))


def test_bandit_argmax_and_tie():
    one = np.ones((1, 2, 1))
    pi, vt = optimal_policy(TabularMDP.from_arrays(one, np.array([[0.2, 0.8]]), 1))
    assert pi(0, 0) == 1 and vt.root_value == pytest.approx(0.8)
    pi, _ = optimal_policy(TabularMDP.from_arrays(one, np.array([[0.5, 0.5]]), 1))
    assert pi(0, 0) == 0


def test_optimal_dominates_random_policies():
    rng = np.random.default_rng(3)
    mdp = random_mdp(3, 2, 5, rng)
    pi, vt = optimal_policy(mdp)
    assert policy_value(mdp, pi).root_value == pytest.approx(vt.root_value, abs=1e-15)
    for p in random_policies(1000, 3, 2, 5, rng):
        assert policy_value(mdp, p).root_value <= vt.root_value + 1e-12


def test_optimal_dominates_exhaustive_set():
    mdp = random_mdp(2, 2, 3, np.random.default_rng(4))
    _, vt = optimal_policy(mdp)
    vals = [policy_value(mdp, p).root_value for p in exhaustive_policies(2, 2, 3)]
    assert max(vals) == pytest.approx(vt.root_value, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_values_match_path_enumeration_and_stay_bounded(seed):
    rng = np.random.default_rng(seed)
    S, A, H = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 5))
    mdp = random_mdp(S, A, H, rng)
    adm = admissible_mask(mdp)
    for p in random_policies(3, S, A, H, rng):
        vt = policy_value(mdp, p)
        assert vt.root_value == pytest.approx(brute_value(mdp, p), abs=1e-12)
        assert np.all(vt.V[adm] >= 0) and np.all(vt.V[adm] <= 1 + 1e-12)
        assert np.all(vt.Q[adm] >= 0) and np.all(vt.Q[adm] <= 1 + 1e-12)
        h, s = np.nonzero(np.ones((H, S)))
        np.testing.assert_array_equal(vt.V[h, s], vt.Q[h, s, p.table[h, s]])


def test_values_bounded_on_admissible_pairs():
    rng = np.random.default_rng(5)
    for _ in range(100):
        S, A, H = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 9))
        mdp = random_mdp(S, A, H, rng, stochastic_rewards=bool(rng.integers(2)))
        adm = admissible_mask(mdp)
        for p in random_policies(100, S, A, H, rng):
            vt = policy_value(mdp, p)
            assert vt.V[adm].min() >= 0 and vt.V[adm].max() <= 1 + 1e-12
            assert vt.Q[adm].min() >= 0 and vt.Q[adm].max() <= 1 + 1e-12


def test_admissible_pairs_examples():
    # state 2 has no incoming transitions
    P = np.zeros((3, 2, 3))
    P[0, 0, 0] = P[0, 1, 1] = 1.0
    P[1, :, 1] = 1.0
    P[2, :, 0] = 1.0
    mdp = TabularMDP.from_arrays(P, np.zeros((3, 2)), 4)
    pairs = admissible_pairs(mdp)
    assert {p for p in pairs if p[1] == 0} == {(0, 0)}
    assert all((2, h) not in pairs for h in range(1, 4))
    assert all((0, h) in pairs and (1, h) in pairs for h in range(1, 4))


def test_admissible_agrees_with_exhaustive_policies():
    rng = np.random.default_rng(6)
    for _ in range(10):
        mdp = random_mdp(3, 2, 3, rng, sparsity=0.6)
        seen = np.zeros((3, 3), dtype=bool)
        for p in exhaustive_policies(3, 2, 3):
            seen |= state_distributions(mdp, p)[:3] > 0
        np.testing.assert_array_equal(seen, admissible_mask(mdp))


def test_pmf_self_loop_point_mass():
    H = 5
    P = np.zeros((2, 2, 2))
    P[:, :, 0] = 1.0
    mdp = TabularMDP.from_arrays(P, np.zeros((2, 2)), H)
    pmfs = visit_count_pmfs(mdp, NonStationaryPolicy.constant(H, 2, 1))
    assert pmfs[0, 1, H] == 1.0
    for s, a in [(0, 0), (1, 0), (1, 1)]:
        assert pmfs[s, a, 0] == 1.0


def test_pmf_coin_self_loop_matches_eight_paths():
    P = np.array([[[0.5, 0.5]], [[0.0, 1.0]]])
    mdp = TabularMDP.from_arrays(P, np.zeros((2, 1)), 3)
    pi = NonStationaryPolicy.constant(3, 2, 0)
    pmf = visit_count_pmf(mdp, pi, 0, 0)
    np.testing.assert_allclose(pmf, brute_pmf(mdp, pi, 0, 0), atol=1e-15)
    np.testing.assert_allclose(pmf, [0, 0.5, 0.25, 0.25], atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_pmf_matches_path_enumeration(seed):
    rng = np.random.default_rng(seed)
    S, A, H = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 6))
    mdp = random_mdp(S, A, H, rng)
    p = random_policies(1, S, A, H, rng)[0]
    pmfs = visit_count_pmfs(mdp, p)
    for s, a in itertools.product(range(S), range(A)):
        np.testing.assert_allclose(pmfs[s, a], brute_pmf(mdp, p, s, a), atol=1e-12)
    assert abs(pmfs.sum(axis=-1) - 1).max() <= 1e-12
    assert abs((pmfs * np.arange(H + 1)).sum() - H) <= 1e-9


def _coin_mdp():
    # the pair (1, 0) is visited once with probability 1/2
    P = np.zeros((3, 1, 3))
    P[0, 0, 1:] = 0.5
    P[1, 0, 2] = P[2, 0, 2] = 1.0
    return TabularMDP.from_arrays(P, np.zeros((3, 1)), 2), NonStationaryPolicy.constant(2, 3, 0)


def test_mu_examples():
    mdp, pi = _coin_mdp()
    np.testing.assert_allclose(visit_count_pmf(mdp, pi, 1, 0), [0.5, 0.5, 0.0])
    assert mu_potential(mdp, [pi], 0.6, 1, 0) == 0
    assert mu_potential(mdp, [pi], 0.4, 1, 0) == 1
    H = 6
    loop = TabularMDP.from_arrays(np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]]),
                                  np.zeros((2, 2)), H)
    always = NonStationaryPolicy.constant(H, 2, 0)
    assert mu_potential(loop, [always], 0.5, 0, 0) == H
    assert mu_potential(loop, [always], 0.5, 0, 1) == 0
    assert mu_potential(loop, [always], 1.0, 1, 1) == 0


def test_mu_rejects_bad_inputs():
    mdp, pi = _coin_mdp()
    with pytest.raises(ValueError):
        mu_potential(mdp, [], 0.5, 0, 0)
    with pytest.raises(ValueError):
        mu_potential(mdp, [pi], 0.0, 0, 0)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_mu_monotonicity(seed):
    rng = np.random.default_rng(seed)
    S, A, H = 2, 2, int(rng.integers(2, 8))
    mdp = random_mdp(S, A, H, rng)
    pols = random_policies(4, S, A, H, rng)
    deltas = np.sort(rng.uniform(0.01, 1.0, size=4))
    tables = [mu_potential_table(mdp, pols, d) for d in deltas]
    for lo, hi in zip(tables, tables[1:]):
        assert np.all(lo >= hi)
    small = mu_potential_table(mdp, pols[:2], deltas[0])
    assert np.all(small <= tables[0])
    for s, a in itertools.product(range(S), range(A)):
        assert mu_potential(mdp, pols, deltas[1], s, a) == tables[1][s, a]

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from olts import (BudgetExceededError, DiscretizedMDP, GridSpec, NonStationaryPolicy,
                  TabularMDP, build_policy_net, enumerate_discretized_mdps, grid_count_bound,
                  grid_mdp_count, optimal_policy, perturbation_bound, perturbation_gap,
                  policy_value, round_to_grid)
from olts.generators import exhaustive_policies, random_mdp, random_policies
from olts.net import _exact_optimal_tables, compositions, grid_mdp_at, iter_grid_batches


def test_gridspec():
    assert GridSpec(4).epsilon == 0.25
    assert GridSpec.from_epsilon(0.1).n == 10
    assert GridSpec.from_epsilon(0.3).n == 4
    for bad in (0, -1, 1.5, True):
        with pytest.raises(ValueError):
            GridSpec(bad)


def test_compositions_small():
    np.testing.assert_array_equal(compositions(2, 2), [[0, 2], [1, 1], [2, 0]])
    assert len(compositions(5, 3)) == math.comb(7, 2)
    assert np.all(compositions(5, 3).sum(axis=1) == 5)


@pytest.mark.parametrize("S,A,n,count", [(1, 2, 2, 9), (2, 1, 1, 16), (2, 2, 2, 6561)])
def test_enumeration_counts(S, A, n, count):
    grid = GridSpec(n)
    mdps = list(enumerate_discretized_mdps(S, A, 2, grid))
    assert len(mdps) == grid_mdp_count(S, A, grid) == count
    assert count <= grid_count_bound(S, A, grid)
    keys = {(m.transition_numerators.tobytes(), m.reward_numerators.tobytes()) for m in mdps}
    assert len(keys) == count
    for m in mdps:
        assert np.all(m.transition_numerators.sum(axis=-1) == n)


def test_counting_bound_values():
    assert grid_count_bound(1, 2, GridSpec(2)) == 81
    assert grid_count_bound(2, 1, GridSpec(1)) == 64


def test_budget_guard():
    grid = GridSpec.from_epsilon(0.1 / (32 * 100 * 2))
    with pytest.raises(BudgetExceededError) as err:
        enumerate_discretized_mdps(2, 2, 100, grid)
    assert err.value.count == grid_mdp_count(2, 2, grid)
    with pytest.raises(BudgetExceededError):
        build_policy_net(2, 2, 4, GridSpec(8))


def test_grid_mdp_at_matches_stream():
    grid = GridSpec(2)
    for i, m in enumerate(enumerate_discretized_mdps(2, 2, 3, grid)):
        if i % 97 == 0:
            g = grid_mdp_at(i, 2, 2, 3, grid)
            np.testing.assert_array_equal(g.transition_numerators, m.transition_numerators)
            np.testing.assert_array_equal(g.reward_numerators, m.reward_numerators)


def test_discretized_rows_must_sum_to_n():
    with pytest.raises(ValueError):
        DiscretizedMDP(GridSpec(4), np.array([[[1, 2]], [[0, 4]]]), np.zeros((2, 1)), 2)


def _row_model(row, r=0.0):
    P = np.array([[row], [[0.0] * (len(row) - 1) + [1.0]]] + [[[1.0] + [0.0] * (len(row) - 1)]]
                 * (len(row) - 2))
    return TabularMDP.from_arrays(P, np.full((len(row), 1), r), 2)


def test_round_examples():
    d = round_to_grid(_row_model([0.3, 0.7]), GridSpec(4))
    np.testing.assert_array_equal(d.transition_numerators[0, 0], [1, 3])
    on_grid = _row_model([0.25, 0.75])
    np.testing.assert_array_equal(round_to_grid(on_grid, GridSpec(4)).transition_numerators[0, 0],
                                  [1, 3])
    d = round_to_grid(_row_model([0.5, 0.5], r=0.37), GridSpec(10))
    assert d.reward_numerators[0, 0] == 4
    assert abs(0.4 - 0.37) <= 0.1


def test_reward_ties_round_down_and_clamp():
    mdp = TabularMDP.from_arrays(np.ones((1, 3, 1)), np.array([[0.125, 0.375, 1.4]]), 1)
    d = round_to_grid(mdp, GridSpec(4))
    np.testing.assert_array_equal(d.reward_numerators[0], [0, 1, 4])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_rounding_properties(seed, n):
    rng = np.random.default_rng(seed)
    S, A = int(rng.integers(1, 5)), int(rng.integers(1, 3))
    mdp = random_mdp(S, A, 3, rng, sparsity=0.4)
    grid = GridSpec(n)
    d = round_to_grid(mdp, grid)
    k = d.transition_numerators
    assert np.all(k.sum(axis=-1) == n)
    assert np.all(k[mdp.transitions == 0] == 0)
    assert np.abs(k / n - mdp.transitions).max() <= 1 / n + 1e-12
    assert np.abs(d.reward_numerators / n - mdp.expected_rewards).max() <= 1 / n + 1e-12


def test_perturbation_examples():
    grid = GridSpec(4)
    on_grid = grid_mdp_at(1234, 2, 2, 5, grid).to_tabular()
    for p in random_policies(20, 2, 2, 5, np.random.default_rng(0)):
        assert perturbation_gap(on_grid, grid, p) == 0.0
    rng = np.random.default_rng(1)
    for _ in range(20):
        mdp = random_mdp(3, 2, 1, rng)
        p = random_policies(1, 3, 2, 1, rng)[0]
        assert perturbation_gap(mdp, GridSpec(10), p) <= 0.1 + 1e-12


def test_perturbation_quoted_bound():
    rng = np.random.default_rng(2)
    mdp = random_mdp(3, 2, 10, rng)
    grid = GridSpec(10)
    assert perturbation_bound(10, 3, grid) == pytest.approx(3.7)
    for p in random_policies(100, 3, 2, 10, rng):
        gap = perturbation_gap(mdp, grid, p)
        assert gap <= 3.7 + 1e-12 and gap <= 12


def test_exact_tables_agree_with_float_oracle():
    grid = GridSpec(3)
    rng = np.random.default_rng(3)
    idx = rng.choice(grid_mdp_count(2, 2, grid), size=300, replace=False)
    for i in idx:
        g = grid_mdp_at(int(i), 2, 2, 3, grid)
        exact = _exact_optimal_tables(g.reward_numerators[None], g.transition_numerators[None], 3, 3)[0]
        pi, _ = optimal_policy(g.to_tabular())
        np.testing.assert_array_equal(exact, pi.table)


def test_exact_tables_object_fallback_matches_int64():
    rng = np.random.default_rng(4)
    r = rng.integers(0, 3, size=(50, 2, 2))
    k = compositions(2, 2)[rng.integers(3, size=(50, 2, 2))]
    small = _exact_optimal_tables(r, k, 3, 2)
    # a horizon long enough to overflow int64 takes the object path
    big = _exact_optimal_tables(r, k, 70, 2)
    np.testing.assert_array_equal(small, big[:, -3:])


def test_bandit_net():
    net = build_policy_net(1, 2, 3, GridSpec(2))
    assert net.enumerated == 9 and len(net) == 2
    assert NonStationaryPolicy.constant(3, 1, 0) in net
    assert NonStationaryPolicy.constant(3, 1, 1) in net
    # 3 MDPs with tied rewards plus 3 with r0 > r1 choose action 0
    assert net.source_count[net.index_of(NonStationaryPolicy.constant(3, 1, 0))] == 6


def test_net_contains_every_member_optimum():
    grid = GridSpec(2)
    net = build_policy_net(2, 2, 3, grid, batch_size=1000)
    assert sum(net.source_count) == net.enumerated == grid_mdp_count(2, 2, grid)
    assert len({p.key() for p in net.policies}) == len(net)
    assert len(net) <= net.bound
    for i, m in enumerate(enumerate_discretized_mdps(2, 2, 3, grid)):
        if i % 53 == 0:
            assert optimal_policy(m.to_tabular())[0] in net
    for p, src in zip(net.policies, net.first_source):
        assert optimal_policy(grid_mdp_at(src, 2, 2, 3, grid).to_tabular())[0] == p


def test_net_is_independent_of_batch_size():
    grid = GridSpec(2)
    a = build_policy_net(2, 2, 2, grid, batch_size=7)
    b = build_policy_net(2, 2, 2, grid, batch_size=1 << 16)
    assert a.policies == b.policies
    assert a.source_count == b.source_count


def test_net_guarantee_small():
    grid = GridSpec(4)
    net = build_policy_net(2, 2, 3, grid)
    rng = np.random.default_rng(5)
    for _ in range(10):
        mdp = random_mdp(2, 2, 3, rng)
        best = max(policy_value(mdp, p).root_value for p in net.policies)
        assert best >= optimal_policy(mdp)[1].root_value - 8 * 3 * 2 / 4
        # the sharper rounding bound also holds here
        assert best >= optimal_policy(mdp)[1].root_value - 2 * perturbation_bound(3, 2, grid)

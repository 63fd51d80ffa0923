"""Seeded model and policy-set generators used by tests, sweeps and demos."""
from __future__ import annotations

import itertools

import numpy as np

from .mdp import NonStationaryPolicy, TabularMDP


def random_mdp(num_states: int, num_actions: int, horizon: int, rng: np.random.Generator,
               sparsity: float = 0.3, stochastic_rewards: bool = False,
               initial=0) -> TabularMDP:
    """Random model whose per-step rewards lie in ``[0, 1/H]``.

    Any path therefore collects at most 1 in total. ``sparsity`` is the chance
    that an off-diagonal transition entry is forced to zero (one successor is
    always kept).
    """
    S, A = num_states, num_actions
    P = rng.dirichlet(np.ones(S), size=(S, A))
    if sparsity > 0 and S > 1:
        drop = rng.random((S, A, S)) < sparsity
        keep = rng.integers(S, size=(S, A))
        drop[np.arange(S)[:, None], np.arange(A)[None, :], keep] = False
        P = np.where(drop, 0.0, P)
        P /= P.sum(axis=-1, keepdims=True)
    w = rng.random((S, A)) / horizon
    if not stochastic_rewards:
        return TabularMDP.from_arrays(P, w, horizon, initial)
    p = rng.uniform(0.2, 0.8, size=(S, A))
    support = np.stack([np.zeros((S, A)), w], axis=-1)
    probs = np.stack([1 - p, p], axis=-1)
    return TabularMDP(P, support, probs, horizon, initial)


def chain_mdp(horizon: int, reward: float | None = None) -> TabularMDP:
    """One state, one action, deterministic reward ``1/H`` per step by default."""
    r = 1.0 / horizon if reward is None else reward
    return TabularMDP.from_arrays(np.ones((1, 1, 1)), np.full((1, 1), r), horizon)


def two_state_battery(horizon: int = 3, stochastic_rewards: bool = False) -> TabularMDP:
    """Fixed stochastic 2-state, 2-action model.

    Action 0 tends to stay, action 1 tends to switch; state 1 pays more.
    Rewards are deterministic unless ``stochastic_rewards``, in which case
    each pays its amount with some probability and 0 otherwise.
    """
    P = np.array([[[0.7, 0.3], [0.2, 0.8]],
                  [[0.4, 0.6], [0.9, 0.1]]])
    w = np.array([[0.2, 0.4], [1.0, 0.6]]) / horizon
    if not stochastic_rewards:
        return TabularMDP.from_arrays(P, w, horizon, 0)
    p = np.array([[0.5, 0.7], [0.8, 0.5]])
    support = np.stack([np.zeros((2, 2)), w], axis=-1)
    probs = np.stack([1 - p, p], axis=-1)
    return TabularMDP(P, support, probs, horizon, 0)


def random_policies(k: int, num_states: int, num_actions: int, horizon: int,
                    rng: np.random.Generator) -> list[NonStationaryPolicy]:
    tables = rng.integers(num_actions, size=(k, horizon, num_states))
    return [NonStationaryPolicy(t) for t in tables]


def exhaustive_policies(num_states: int, num_actions: int, horizon: int,
                        limit: int = 1 << 16) -> list[NonStationaryPolicy]:
    """All ``A ** (H * S)`` deterministic policies, in lexicographic table order."""
    cells = horizon * num_states
    if num_actions ** cells > limit:
        raise ValueError(f"{num_actions ** cells} policies exceed the limit {limit}")
    return [NonStationaryPolicy(np.array(t, dtype=np.int64).reshape(horizon, num_states))
            for t in itertools.product(range(num_actions), repeat=cells)]


def policy_set_with(policies: list[NonStationaryPolicy], extra: NonStationaryPolicy,
                    rng: np.random.Generator) -> tuple[list[NonStationaryPolicy], int]:
    """Insert ``extra`` at a seeded position; returns the list and that position."""
    pos = int(rng.integers(len(policies) + 1))
    return policies[:pos] + [extra] + policies[pos:], pos

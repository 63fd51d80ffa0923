"""Shared brute-force oracles for tests.

These enumerate every state path of a small model explicitly, so they share
no code with the dynamic programs in ``olts.oracle``.
"""
import itertools

import numpy as np
import pytest

from olts import TabularMDP


def enumerate_paths(mdp: TabularMDP, policy):
    """Yield ``(probability, states, actions)`` for every positive-probability path."""
    H, S = mdp.horizon, mdp.num_states
    P = mdp.transitions
    s0 = mdp.initial
    for nxt in itertools.product(range(S), repeat=H):
        prob, s = 1.0, s0
        states, actions = [s0], []
        for h in range(H):
            a = int(policy.table[h, s])
            prob *= P[s, a, nxt[h]]
            if prob == 0:
                break
            actions.append(a)
            s = nxt[h]
            states.append(s)
        if prob > 0:
            yield prob, states, actions


def brute_value(mdp, policy) -> float:
    r = mdp.expected_rewards
    return sum(p * sum(r[s, a] for s, a in zip(st, ac)) for p, st, ac in enumerate_paths(mdp, policy))


def brute_pmf(mdp, policy, s, a) -> np.ndarray:
    out = np.zeros(mdp.horizon + 1)
    for p, st, ac in enumerate_paths(mdp, policy):
        out[sum(1 for x, y in zip(st, ac) if (x, y) == (s, a))] += p
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

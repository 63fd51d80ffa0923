"""Exact dynamic-programming computations on a known model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import NonStationaryPolicy, TabularMDP

TIE_TOL = 1e-12
PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ValueTables:
    """``V[h, s]`` and ``Q[h, s, a]`` for 0-based steps, plus the root value."""

    V: np.ndarray
    Q: np.ndarray
    root_value: float


def _root(mdp: TabularMDP, V1: np.ndarray) -> float:
    if mdp.has_fixed_initial:
        return float(V1[mdp.initial])
    return float(mdp.initial_distribution @ V1)


def policy_value(mdp: TabularMDP, policy: NonStationaryPolicy) -> ValueTables:
    """Backward induction for a fixed policy using expected rewards."""
    policy.check_compatible(mdp)
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    R = mdp.expected_rewards
    P = mdp.transitions
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    states = np.arange(S)
    for h in range(H - 1, -1, -1):
        Q[h] = R + P @ V[h + 1]
        V[h] = Q[h, states, policy.table[h]]
    return ValueTables(V[:H], Q, _root(mdp, V[0]))


def optimal_policy(mdp: TabularMDP) -> tuple[NonStationaryPolicy, ValueTables]:
    """Optimal policy by backward induction; ties go to the lowest action."""
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    R = mdp.expected_rewards
    P = mdp.transitions
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    table = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q[h] = R + P @ V[h + 1]
        best = Q[h].max(axis=1, keepdims=True)
        table[h] = np.argmax(Q[h] >= best - TIE_TOL, axis=1)
        V[h] = Q[h, np.arange(S), table[h]]
    return NonStationaryPolicy(table), ValueTables(V[:H], Q, _root(mdp, V[0]))


def admissible_mask(mdp: TabularMDP) -> np.ndarray:
    """Boolean ``(H, S)`` array: state ``s`` reachable at step ``h`` by some policy.

    Any stored probability above zero counts as reachable.
    """
    H, S = mdp.horizon, mdp.num_states
    reach = np.zeros((H, S), dtype=bool)
    reach[0] = mdp.initial_distribution > 0
    succ = (mdp.transitions > 0).any(axis=1)  # (S, S'): some action reaches s'
    for h in range(1, H):
        reach[h] = succ[reach[h - 1]].any(axis=0)
    return reach


def admissible_pairs(mdp: TabularMDP) -> frozenset[tuple[int, int]]:
    """Admissible ``(s, h)`` pairs, ``h`` 0-based."""
    hs, ss = np.nonzero(admissible_mask(mdp))
    return frozenset((int(s), int(h)) for h, s in zip(hs, ss))


def state_distributions(mdp: TabularMDP, policy: NonStationaryPolicy) -> np.ndarray:
    """``d[h, s] = Pr[s_h = s]`` for h = 0..H (row H is the terminal state)."""
    H, S = mdp.horizon, mdp.num_states
    d = np.zeros((H + 1, S))
    d[0] = mdp.initial_distribution
    states = np.arange(S)
    for h in range(H):
        d[h + 1] = d[h] @ mdp.transitions[states, policy.table[h]]
    return d


def visit_count_pmf(mdp: TabularMDP, policy: NonStationaryPolicy, s: int, a: int) -> np.ndarray:
    """Exact distribution of the number of visits to ``(s, a)`` in one episode.

    Returns an array of length ``H + 1`` indexed by the visit count.
    """
    policy.check_compatible(mdp)
    H, S = mdp.horizon, mdp.num_states
    states = np.arange(S)
    # joint[x, c]: probability of being in state x having visited (s, a) c times
    joint = np.zeros((S, H + 1))
    joint[:, 0] = mdp.initial_distribution
    for h in range(H):
        acts = policy.table[h]
        if acts[s] == a:
            joint[s, 1:] = joint[s, :-1].copy()
            joint[s, 0] = 0.0
        joint = mdp.transitions[states, acts].T @ joint
    return joint.sum(axis=0)


def visit_count_pmfs(mdp: TabularMDP, policy: NonStationaryPolicy) -> np.ndarray:
    """``(S, A, H + 1)`` array of visit-count pmfs for every pair."""
    S, A = mdp.num_states, mdp.num_actions
    out = np.zeros((S, A, mdp.horizon + 1))
    for s in range(S):
        for a in range(A):
            out[s, a] = visit_count_pmf(mdp, policy, s, a)
    return out


def _mu_from_tails(tails: np.ndarray, delta: float) -> np.ndarray:
    # tails[..., lam] = max over policies of Pr[f >= lam]; lam = 0 always qualifies
    ok = tails >= delta - PROB_TOL
    ok[..., 0] = True
    H1 = tails.shape[-1]
    return (H1 - 1 - np.argmax(ok[..., ::-1], axis=-1)).astype(np.int64)


def _tails(pmf: np.ndarray) -> np.ndarray:
    return np.cumsum(pmf[..., ::-1], axis=-1)[..., ::-1]


def mu_potential(mdp: TabularMDP, policies: Sequence[NonStationaryPolicy], delta: float,
                 s: int, a: int) -> int:
    """Largest visit count ``lam`` that some policy reaches with probability >= ``delta``."""
    if not policies:
        raise ValueError("policy set must be non-empty")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    tails = np.max([_tails(visit_count_pmf(mdp, p, s, a)) for p in policies], axis=0)
    return int(_mu_from_tails(tails, delta))


def mu_potential_table(mdp: TabularMDP, policies: Sequence[NonStationaryPolicy],
                       delta: float, pmf_cache: dict | None = None) -> np.ndarray:
    """``mu_potential`` for every ``(s, a)`` at once, shape ``(S, A)``."""
    if not policies:
        return np.zeros((mdp.num_states, mdp.num_actions), dtype=np.int64)
    tails = None
    for p in policies:
        if pmf_cache is not None:
            key = p.key()
            if key not in pmf_cache:
                pmf_cache[key] = visit_count_pmfs(mdp, p)
            pmfs = pmf_cache[key]
        else:
            pmfs = visit_count_pmfs(mdp, p)
        t = _tails(pmfs)
        tails = t if tails is None else np.maximum(tails, t)
    return _mu_from_tails(tails, delta)

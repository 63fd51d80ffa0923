"""Episodic tabular MDPs, non-stationary policies and the sampling environment.

Steps are 0-based throughout: a policy table row ``h`` is the action map used
at step ``h + 1`` of an episode of length ``H``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-9
REWARD_SUM_TOL = 1e-9


class ModelViolationError(RuntimeError):
    """A sampled episode broke the bounded-total-reward assumption."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite episodic MDP.

    ``transitions[s, a]`` is the next-state distribution, rewards are finite
    discrete distributions stored as padded ``reward_support`` /
    ``reward_probs`` arrays of shape ``(S, A, K)``. ``initial`` is either a
    state index or a probability vector over states.
    """

    transitions: np.ndarray
    reward_support: np.ndarray
    reward_probs: np.ndarray
    horizon: int
    initial: int | np.ndarray = 0

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        sup = np.asarray(self.reward_support, dtype=float)
        prob = np.asarray(self.reward_probs, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transitions must have shape (S, A, S), got {P.shape}")
        if sup.shape != prob.shape or sup.shape[:2] != P.shape[:2]:
            raise ValueError("reward arrays must have shape (S, A, K)")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "transitions", _frozen(P))
        object.__setattr__(self, "reward_support", _frozen(sup))
        object.__setattr__(self, "reward_probs", _frozen(prob))
        object.__setattr__(self, "horizon", int(self.horizon))
        if np.ndim(self.initial) == 0:
            object.__setattr__(self, "initial", int(self.initial))
        else:
            mu = np.asarray(self.initial, dtype=float)
            if mu.shape != (P.shape[0],):
                raise ValueError("initial distribution must have length S")
            object.__setattr__(self, "initial", _frozen(mu))

    @classmethod
    def from_arrays(cls, transitions, rewards, horizon: int, initial=0) -> "TabularMDP":
        """Build a model from a transition array and rewards.

        ``rewards`` is either an ``(S, A)`` array of deterministic rewards or
        a nested ``[s][a]`` list of ``(support, probs)`` pairs.
        """
        P = np.asarray(transitions, dtype=float)
        S, A = P.shape[:2]
        if isinstance(rewards, np.ndarray) or np.ndim(rewards) == 2:
            r = np.asarray(rewards, dtype=float)
            if r.shape != (S, A):
                raise ValueError(f"deterministic rewards must have shape {(S, A)}")
            return cls(P, r[:, :, None], np.ones((S, A, 1)), horizon, initial)
        K = max(len(rewards[s][a][0]) for s in range(S) for a in range(A))
        sup = np.zeros((S, A, K))
        prob = np.zeros((S, A, K))
        for s in range(S):
            for a in range(A):
                vals, ps = rewards[s][a]
                sup[s, a, : len(vals)] = vals
                prob[s, a, : len(ps)] = ps
        return cls(P, sup, prob, horizon, initial)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def has_fixed_initial(self) -> bool:
        return isinstance(self.initial, int)

    @property
    def initial_distribution(self) -> np.ndarray:
        if self.has_fixed_initial:
            mu = np.zeros(self.num_states)
            mu[self.initial] = 1.0
            return mu
        return np.asarray(self.initial)

    @property
    def expected_rewards(self) -> np.ndarray:
        return (self.reward_support * self.reward_probs).sum(axis=-1)

    @property
    def deterministic_rewards(self) -> bool:
        return self.reward_support.shape[-1] == 1

    def with_horizon(self, horizon: int) -> "TabularMDP":
        return TabularMDP(self.transitions, self.reward_support, self.reward_probs,
                          horizon, self.initial)


@dataclass(frozen=True, eq=False)
class NonStationaryPolicy:
    """Deterministic policy: ``table[h, s]`` is the action at step ``h``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table)
        if t.ndim != 2:
            raise ValueError("policy table must have shape (H, S)")
        if t.size and (t.min() < 0 or not np.issubdtype(t.dtype, np.integer)):
            raise ValueError("policy entries must be non-negative integers")
        object.__setattr__(self, "table", _frozen(t.astype(np.int64)))

    @classmethod
    def constant(cls, horizon: int, num_states: int, action: int) -> "NonStationaryPolicy":
        return cls(np.full((horizon, num_states), action, dtype=np.int64))

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    @property
    def num_states(self) -> int:
        return self.table.shape[1]

    def key(self) -> bytes:
        return self.table.tobytes() + bytes(str(self.table.shape), "ascii")

    def __eq__(self, other):
        if not isinstance(other, NonStationaryPolicy):
            return NotImplemented
        return self.table.shape == other.table.shape and bool(np.all(self.table == other.table))

    def __hash__(self):
        return hash(self.key())

    def __call__(self, h: int, s: int) -> int:
        return int(self.table[h, s])

    def check_compatible(self, mdp: TabularMDP) -> None:
        if self.table.shape != (mdp.horizon, mdp.num_states):
            raise ValueError(
                f"policy shape {self.table.shape} does not match model "
                f"(H={mdp.horizon}, S={mdp.num_states})")
        if self.table.size and self.table.max() >= mdp.num_actions:
            raise ValueError("policy uses an action index outside the model")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``s_1..s_{H+1}``, actions ``a_1..a_H`` and rewards ``r_1..r_H``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def cumulative_reward(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def terminal_state(self) -> int:
        return int(self.states[-1])

    def records(self) -> list[tuple[int, int, float]]:
        return [(int(s), int(a), float(r))
                for s, a, r in zip(self.states[:-1], self.actions, self.rewards)]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards))

    __hash__ = None


def validate(mdp: TabularMDP) -> list[str]:
    """Return every invariant violation found in ``mdp`` (empty when valid)."""
    problems = []
    P = mdp.transitions
    S, A = P.shape[:2]
    if np.any(P < 0):
        for s, a, t in zip(*np.nonzero(P < 0)):
            problems.append(f"negative transition probability P({t}|{s},{a})={P[s, a, t]}")
    sums = P.sum(axis=-1)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)):
        problems.append(f"transition row ({s},{a}) sums to {sums[s, a]!r}")
    probs = mdp.reward_probs
    if np.any(probs < 0):
        problems.append("negative reward probability")
    rsums = probs.sum(axis=-1)
    for s, a in zip(*np.nonzero(np.abs(rsums - 1.0) > ROW_SUM_TOL)):
        problems.append(f"reward distribution ({s},{a}) sums to {rsums[s, a]!r}")
    neg = (mdp.reward_support < 0) & (probs > 0)
    for s, a in zip(*np.nonzero(neg.any(axis=-1))):
        problems.append(f"negative reward support value at ({s},{a})")
    if mdp.has_fixed_initial:
        if not 0 <= mdp.initial < S:
            problems.append(f"initial state {mdp.initial} out of range")
    else:
        mu = mdp.initial_distribution
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > ROW_SUM_TOL:
            problems.append(f"initial distribution invalid (sum {mu.sum()!r})")
    if S < 1 or A < 1:
        problems.append("model needs at least one state and one action")
    return problems


def reduce_initial_distribution(mdp: TabularMDP) -> TabularMDP:
    """Fold a random initial state into a fixed one.

    Appends a start state (index ``S``) whose every action has reward 0 and
    moves to the original initial distribution; the horizon grows by one.
    """
    if mdp.has_fixed_initial:
        raise ValueError("model already has a fixed initial state")
    S, A = mdp.num_states, mdp.num_actions
    P = np.zeros((S + 1, A, S + 1))
    P[:S, :, :S] = mdp.transitions
    P[S, :, :S] = mdp.initial_distribution
    K = mdp.reward_support.shape[-1]
    sup = np.zeros((S + 1, A, K))
    prob = np.zeros((S + 1, A, K))
    sup[:S] = mdp.reward_support
    prob[:S] = mdp.reward_probs
    prob[S, :, 0] = 1.0
    return TabularMDP(P, sup, prob, mdp.horizon + 1, S)


def extend_policy(policy: NonStationaryPolicy, start_action: int = 0) -> NonStationaryPolicy:
    """Lift a policy of the original model to its reduced counterpart."""
    H, S = policy.table.shape
    table = np.zeros((H + 1, S + 1), dtype=np.int64)
    table[0, S] = start_action
    table[1:, :S] = policy.table
    return NonStationaryPolicy(table)


def _cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    # pin the tail to 1 so round-off never selects past the last positive entry
    cdf[cdf >= cdf[..., -1:]] = 1.0
    return cdf


class EnvironmentHandle:
    """Sampling access to a model; the only source of real episodes.

    Every sampled episode increments :attr:`episodes_sampled`. Children
    created by :meth:`spawn` draw from independent sub-streams of this
    handle's generator and also count their episodes against the parent.
    """

    def __init__(self, model: TabularMDP, seed=None, *, rng: np.random.Generator | None = None,
                 parent: "EnvironmentHandle | None" = None):
        if not model.has_fixed_initial:
            raise ValueError("environment needs a fixed initial state; "
                             "use reduce_initial_distribution first")
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.episodes_sampled = 0
        self.parent = parent
        self._trans_cdf = _cdf(model.transitions)
        self._reward_cdf = _cdf(model.reward_probs)

    def spawn(self, n: int) -> list["EnvironmentHandle"]:
        """Split off ``n`` children with independent streams (``Generator.spawn``)."""
        return [EnvironmentHandle(self.model, rng=g, parent=self) for g in self.rng.spawn(n)]

    def _count(self, n: int) -> None:
        handle = self
        while handle is not None:
            handle.episodes_sampled += n
            handle = handle.parent

    def sample_episodes(self, tables: np.ndarray, policy_ids: np.ndarray | None = None):
        """Sample one episode per entry of ``policy_ids``.

        ``tables`` has shape ``(k, H, S)`` (or ``(H, S)`` for a single
        policy). Episodes are generated in the order given. Returns arrays
        ``states (n, H+1)``, ``actions (n, H)`` and ``rewards (n, H)``.
        """
        tables = np.asarray(tables)
        if tables.ndim == 2:
            tables = tables[None]
        if policy_ids is None:
            policy_ids = np.zeros(1, dtype=np.int64)
        policy_ids = np.asarray(policy_ids, dtype=np.int64)
        m = self.model
        H = m.horizon
        if tables.shape[1:] != (H, m.num_states):
            raise ValueError("policy tables do not match the model")
        n = len(policy_ids)
        S, A = m.num_states, m.num_actions
        states = np.empty((n, H + 1), dtype=np.int64)
        actions = np.empty((n, H), dtype=np.int64)
        rewards = np.empty((n, H))
        s = np.full(n, m.initial, dtype=np.int64)
        states[:, 0] = s
        single = len(tables) == 1
        row_base = policy_ids * S
        trans_cdf = self._trans_cdf.reshape(S * A, S)
        reward_cdf = self._reward_cdf.reshape(S * A, -1)
        support = m.reward_support.reshape(S * A, -1)
        det = m.deterministic_rewards
        for h in range(H):
            a = tables[0, h][s] if single else tables[:, h, :].ravel()[row_base + s]
            pair = s * A + a
            if det:
                r = support[pair, 0]
            else:
                u = self.rng.random(n)
                k = np.zeros(n, dtype=np.int64)
                for j in range(support.shape[1] - 1):
                    k += u >= reward_cdf[pair, j]
                r = support[pair, k]
            u = self.rng.random(n)
            # inverse-CDF draw, one column at a time to avoid an (n, S) temporary
            s = np.zeros(n, dtype=np.int64)
            for j in range(S - 1):
                s += u >= trans_cdf[pair, j]
            actions[:, h] = a
            rewards[:, h] = r
            states[:, h + 1] = s
        self._count(n)
        totals = rewards.sum(axis=1)
        if n and totals.max() > 1.0 + REWARD_SUM_TOL:
            i = int(np.argmax(totals))
            raise ModelViolationError(
                f"episode cumulative reward {totals[i]!r} exceeds 1")
        return states, actions, rewards

    def sample_episode(self, policy: NonStationaryPolicy) -> Trajectory:
        policy.check_compatible(self.model)
        states, actions, rewards = self.sample_episodes(policy.table)
        return Trajectory(states[0], actions[0], rewards[0])


def sample_episode(env: EnvironmentHandle, policy: NonStationaryPolicy) -> Trajectory:
    return env.sample_episode(policy)


def stack_tables(policies: Sequence[NonStationaryPolicy]) -> np.ndarray:
    return np.stack([p.table for p in policies])

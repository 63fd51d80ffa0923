"""Trajectory synthesis from a replay buffer (SimOne) and its F-copy driver (SimAll)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mdp import EnvironmentHandle, NonStationaryPolicy, Trajectory, stack_tables
from .oracle import mu_potential_table


class _Fail:
    """Outcome of a simulation that ran out of samples."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Fail"

    def __bool__(self):
        return False


FAIL = _Fail()


def repetitions(num_states: int, num_actions: int, delta_sim: float, scale: float = 1.0) -> int:
    """Episodes per known policy in every rollout: ``16SA/d * ln(4SA/d)``, scaled, rounded up."""
    if not 0 < delta_sim < 1:
        raise ValueError("delta_sim must lie in (0, 1)")
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    SA = num_states * num_actions
    return max(1, math.ceil(scale * 16 * SA / delta_sim * math.log(4 * SA / delta_sim)))


def _fill(next_state, reward, episode, stored, length, states, actions, rewards, episode_ids):
    """Append episodes (chronological per copy) to batched per-pair buffers in place.

    Arrays ``next_state``/``reward``/``episode`` have shape ``(B, S, A, C)``;
    only the first ``C`` samples of each pair are retained, ``length`` counts all.
    """
    B, S, A, C = next_state.shape
    SA = S * A
    E, H = actions.shape[1:]
    pairs = (states[:, :, :-1] * A + actions).reshape(B, E * H)
    offsets = (np.arange(B) * SA)[:, None]
    length += np.bincount((pairs + offsets).ravel(), minlength=B * SA).reshape(B, S, A)
    nxt = states[:, :, 1:].reshape(B, E * H)
    rw = rewards.reshape(B, E * H)
    ep = np.broadcast_to(episode_ids[:, :, None], (B, E, H)).reshape(B, E * H)
    room = (C - stored).reshape(B, SA)
    # look only at a prefix long enough to fill every pair that can still be filled
    L = min(E * H, max(4 * C * SA, 1024))
    while True:
        pre = pairs[:, :L]
        counts = np.zeros((B, SA), dtype=np.int64)
        for p in range(SA):
            counts[:, p] = (pre == p).sum(axis=1)
        if L == E * H or np.all(counts >= room):
            break
        L = min(E * H, 4 * L)
    for p in range(SA):
        s, a = divmod(p, A)
        mask = pre == p
        rank = np.cumsum(mask, axis=1)
        take = mask & (rank <= room[:, p][:, None])
        b, pos = np.nonzero(take)
        slot = stored[b, s, a] + rank[b, pos] - 1
        next_state[b, s, a, slot] = nxt[b, pos]
        reward[b, s, a, slot] = rw[b, pos]
        episode[b, s, a, slot] = ep[b, pos]
        stored[:, s, a] += take.sum(axis=1)


class ReplayBuffer:
    """Per-pair chronological samples ``(next_state, reward)`` with use cursors.

    Only the first ``capacity`` samples of each pair are stored: one
    simulation of an ``H``-step episode consumes at most ``H`` samples of any
    pair, so ``capacity = H`` loses nothing. ``length`` still counts every
    sample appended.
    """

    def __init__(self, num_states: int, num_actions: int, capacity: int):
        self.num_states = num_states
        self.num_actions = num_actions
        self.capacity = capacity
        shape = (num_states, num_actions, capacity)
        self.next_state = np.zeros(shape, dtype=np.int64)
        self.reward = np.zeros(shape)
        self.episode = np.full(shape, -1, dtype=np.int64)
        self.stored = np.zeros(shape[:2], dtype=np.int64)
        self.length = np.zeros(shape[:2], dtype=np.int64)
        self.cursor = np.zeros(shape[:2], dtype=np.int64)
        self.fill_start = 0

    def clear(self) -> None:
        self.stored[:] = 0
        self.length[:] = 0
        self.cursor[:] = 0
        self.episode[:] = -1

    def extend(self, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
               episode_ids: np.ndarray | None = None) -> None:
        """Append whole episodes, oldest first, as returned by ``sample_episodes``."""
        if episode_ids is None:
            episode_ids = np.arange(len(actions))
        _fill(self.next_state[None], self.reward[None], self.episode[None], self.stored[None],
              self.length[None], states[None], actions[None], rewards[None],
              np.asarray(episode_ids)[None])

    def sequence(self, s: int, a: int) -> list[tuple[int, float]]:
        """Stored samples of ``(s, a)`` in collection order."""
        k = self.stored[s, a]
        return [(int(x), float(r)) for x, r in zip(self.next_state[s, a, :k], self.reward[s, a, :k])]

    def reset_cursors(self) -> None:
        self.cursor[:] = 0

    def take(self, s: int, a: int):
        """Consume the first unused sample of ``(s, a)``, or ``None`` if exhausted."""
        c = self.cursor[s, a]
        if c >= self.length[s, a]:
            return None
        if c >= self.stored[s, a]:
            raise IndexError("sample beyond buffer capacity requested")
        self.cursor[s, a] = c + 1
        return int(self.next_state[s, a, c]), float(self.reward[s, a, c])

    def total(self) -> int:
        return int(self.length.sum())


class SimOne:
    """One copy of the simulator: a replay buffer plus the policies that filled it."""

    def __init__(self, tau: int, num_states: int, num_actions: int, horizon: int,
                 initial_state: int = 0, env: EnvironmentHandle | None = None):
        if tau < 1:
            raise ValueError("tau must be positive")
        self.tau = tau
        self.horizon = horizon
        self.initial_state = initial_state
        self.env = env
        self.buffer = ReplayBuffer(num_states, num_actions, horizon)
        self.known_policies: list[NonStationaryPolicy] = []
        self._known: dict[bytes, int] = {}

    @classmethod
    def for_env(cls, env: EnvironmentHandle, tau: int) -> "SimOne":
        m = env.model
        return cls(tau, m.num_states, m.num_actions, m.horizon, m.initial, env)

    def simulate(self, policy: NonStationaryPolicy):
        """Replay buffered samples along ``policy``; ``FAIL`` once a pair runs dry."""
        buf = self.buffer
        buf.reset_cursors()
        H = self.horizon
        states = np.empty(H + 1, dtype=np.int64)
        actions = np.empty(H, dtype=np.int64)
        rewards = np.empty(H)
        s = self.initial_state
        states[0] = s
        for h in range(H):
            a = int(policy.table[h, s])
            sample = buf.take(s, a)
            if sample is None:
                return FAIL
            s, rewards[h] = sample
            actions[h] = a
            states[h + 1] = s
        return Trajectory(states, actions, rewards)

    def rollout(self, policy: NonStationaryPolicy, env: EnvironmentHandle | None = None) -> Trajectory:
        """Refill the buffer with ``tau`` fresh episodes of every known policy.

        ``policy`` joins the known set first; the first of its ``tau``
        episodes is returned.
        """
        env = env if env is not None else self.env
        if env is None:
            raise ValueError("rollout needs an environment")
        self.buffer.clear()
        key = policy.key()
        if key not in self._known:
            self._known[key] = len(self.known_policies)
            self.known_policies.append(policy)
        k = len(self.known_policies)
        ids = np.repeat(np.arange(k), self.tau)
        start = env.episodes_sampled
        self.buffer.fill_start = start
        states, actions, rewards = env.sample_episodes(stack_tables(self.known_policies), ids)
        self.buffer.extend(states, actions, rewards, start + np.arange(len(ids)))
        j = self._known[key] * self.tau
        return Trajectory(states[j], actions[j], rewards[j])


def simulate_batch(next_state: np.ndarray, reward: np.ndarray, length: np.ndarray,
                   table: np.ndarray, initial_state: int, keep: bool = False):
    """Run ``simulate`` for one policy on ``F`` stacked buffers at once.

    Buffers have shape ``(F, S, A, C)`` with ``length`` of shape ``(F, S, A)``.
    Returns ``(failed, totals)`` and, when ``keep``, the trajectory arrays.
    """
    F = next_state.shape[0]
    H = table.shape[0]
    C = next_state.shape[-1]
    rows = np.arange(F)
    cursor = np.zeros(length.shape, dtype=np.int64)
    s = np.full(F, initial_state, dtype=np.int64)
    failed = np.zeros(F, dtype=bool)
    states = np.empty((F, H + 1), dtype=np.int64)
    actions = np.empty((F, H), dtype=np.int64)
    rewards = np.zeros((F, H))
    states[:, 0] = s
    for h in range(H):
        a = table[h, s]
        c = cursor[rows, s, a]
        failed |= c >= length[rows, s, a]
        ok = ~failed
        cc = np.minimum(c, C - 1)
        cursor[rows[ok], s[ok], a[ok]] += 1
        actions[:, h] = a
        rewards[:, h] = np.where(ok, reward[rows, s, a, cc], 0.0)
        s = np.where(ok, next_state[rows, s, a, cc], s)
        states[:, h + 1] = s
    # same summation as Trajectory.cumulative_reward, so both modes agree bitwise
    totals = np.array([np.sum(r) for r in rewards]) if F else np.zeros(0)
    if keep:
        return failed, totals, (states, actions, rewards)
    return failed, totals


@dataclass
class SimAllResult:
    """Outputs of one SimAll run.

    ``returns[j, i]`` is the cumulative reward of copy ``i`` for policy ``j``
    (0 where ``failed``); ``rolled_out[j]`` tells which branch of the gate
    produced row ``j``.
    """

    returns: np.ndarray
    failed: np.ndarray
    fail_counts: np.ndarray
    rolled_out: np.ndarray
    rollout_events: int
    episodes: int
    tau: int
    copies: int
    decisions: list[dict] = field(default_factory=list)
    trajectories: tuple | None = None

    def trajectory(self, policy_index: int, copy: int):
        if self.trajectories is None:
            raise ValueError("trajectories were not kept")
        if self.failed[policy_index, copy]:
            return FAIL
        st, ac, rw = self.trajectories
        return Trajectory(st[policy_index, copy], ac[policy_index, copy], rw[policy_index, copy])


def gate_threshold(delta_sim: float, copies: int) -> float:
    return 3 * delta_sim / 2 * copies


def sim_all(policies: Sequence[NonStationaryPolicy], delta_sim: float, copies: int,
            env: EnvironmentHandle | Sequence[EnvironmentHandle] | Callable[[int], EnvironmentHandle],
            scale: float = 1.0, tau: int | None = None, mode: str = "batched",
            diagnostics: bool = False, keep_trajectories: bool = False) -> SimAllResult:
    """Produce ``copies`` trajectories (or ``FAIL``) for every policy, in order.

    ``env`` is either one handle, split into independent per-copy sub-streams,
    a sequence of per-copy handles, or a factory ``i -> handle``. ``mode``
    ``"sequential"`` runs each copy's own ``simulate`` in index order and is
    the reference for ``"batched"``, which vectorises across copies; both
    consume randomness identically.
    """
    if copies < 1:
        raise ValueError("need at least one copy")
    if not policies:
        raise ValueError("policy set must be non-empty")
    if mode not in ("batched", "sequential"):
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(env, EnvironmentHandle):
        envs = env.spawn(copies)
    elif callable(env):
        envs = [env(i) for i in range(copies)]
    else:
        envs = list(env)
    if len(envs) != copies:
        raise ValueError("need one environment per copy")
    model = envs[0].model
    for p in policies:
        p.check_compatible(model)
    S, A, H = model.num_states, model.num_actions, model.horizon
    if tau is None:
        tau = repetitions(S, A, delta_sim, scale)
    sims = [SimOne(tau, S, A, H, model.initial, e) for e in envs]
    threshold = gate_threshold(delta_sim, copies)
    P = len(policies)
    returns = np.zeros((P, copies))
    failed = np.zeros((P, copies), dtype=bool)
    fail_counts = np.zeros(P, dtype=np.int64)
    rolled = np.zeros(P, dtype=bool)
    if keep_trajectories:
        traj = (np.zeros((P, copies, H + 1), dtype=np.int64), np.zeros((P, copies, H), dtype=np.int64),
                np.zeros((P, copies, H)))
    decisions = []
    rollout_events = 0
    stacked = None
    pmf_cache: dict = {}
    diag_delta = delta_sim / (2 * S * A)

    def restack():
        return (np.stack([c.buffer.next_state for c in sims]),
                np.stack([c.buffer.reward for c in sims]),
                np.stack([c.buffer.length for c in sims]))

    def env_total():
        return sum(e.episodes_sampled for e in envs)

    for j, pi in enumerate(policies):
        if mode == "batched":
            if stacked is None:
                stacked = restack()
            out = simulate_batch(*stacked, pi.table, model.initial, keep=keep_trajectories)
            fails, totals = out[0], out[1]
            if keep_trajectories:
                for t, arr in zip(traj, out[2]):
                    t[j] = arr
        else:
            fails = np.zeros(copies, dtype=bool)
            totals = np.zeros(copies)
            for i, sim in enumerate(sims):
                z = sim.simulate(pi)
                if z is FAIL:
                    fails[i] = True
                else:
                    totals[i] = z.cumulative_reward
                    if keep_trajectories:
                        traj[0][j, i], traj[1][j, i], traj[2][j, i] = z.states, z.actions, z.rewards
        count = int(fails.sum())
        fail_counts[j] = count
        fire = count > threshold
        row = {"policy_index": j, "fail_count": count, "threshold": threshold, "rollout": fire}
        if fire:
            before = list(sims[0].known_policies)
            for i, sim in enumerate(sims):
                z = sim.rollout(pi)
                totals[i] = z.cumulative_reward
                if keep_trajectories:
                    traj[0][j, i], traj[1][j, i], traj[2][j, i] = z.states, z.actions, z.rewards
            fails = np.zeros(copies, dtype=bool)
            rolled[j] = True
            rollout_events += 1
            stacked = None
            if diagnostics:
                mu0 = mu_potential_table(model, before, diag_delta, pmf_cache)
                mu1 = mu_potential_table(model, sims[0].known_policies, diag_delta, pmf_cache)
                grew = mu1 >= np.maximum(2 * mu0, 1)
                ratio = mu1 / np.maximum(mu0, 0.5)
                s_best, a_best = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
                row.update(mu_doubled=bool(grew.any()), mu_argmax_state=int(s_best),
                           mu_argmax_action=int(a_best), mu_before=mu0, mu_after=mu1)
        elif keep_trajectories:
            for t in traj:
                t[j][fails] = 0
        returns[j] = np.where(fails, 0.0, totals)
        failed[j] = fails
        row["episodes"] = env_total()
        row["rollout_events"] = rollout_events
        decisions.append(row)
    return SimAllResult(returns, failed, fail_counts, rolled, rollout_events, env_total(), tau,
                        copies, decisions, traj if keep_trajectories else None)

"""Grid-discretized MDPs and the policy net built from their optimal policies."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .mdp import NonStationaryPolicy, TabularMDP
from .oracle import admissible_mask, policy_value

DEFAULT_BUDGET = 10**7
_SNAP_TOL = 1e-9


class BudgetExceededError(ValueError):
    """The grid would contain more MDPs than the enumeration budget allows."""

    def __init__(self, count: int, budget: int):
        self.count = count
        self.budget = budget
        super().__init__(f"grid contains {count} MDPs, budget is {budget}")


@dataclass(frozen=True)
class GridSpec:
    """Grid ``{0, 1/n, ..., 1}``; ``n`` is the inverse resolution."""

    inverse_resolution: int

    def __post_init__(self):
        n = self.inverse_resolution
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise ValueError(f"inverse resolution must be a positive integer, got {n!r}")
        object.__setattr__(self, "inverse_resolution", int(n))

    @classmethod
    def from_epsilon(cls, epsilon: float) -> "GridSpec":
        """Grid with ``n = ceil(1/epsilon)``; a non-integer ``1/epsilon`` shrinks epsilon."""
        if not 0 < epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        inv = 1.0 / epsilon
        n = round(inv) if abs(inv - round(inv)) < 1e-9 * inv else math.ceil(inv)
        return cls(n)

    @property
    def n(self) -> int:
        return self.inverse_resolution

    @property
    def epsilon(self) -> float:
        return 1.0 / self.inverse_resolution


@dataclass(frozen=True, eq=False)
class DiscretizedMDP:
    """Grid MDP with integer numerators: ``P = k / n`` and deterministic ``R = r / n``."""

    grid: GridSpec
    transition_numerators: np.ndarray  # (S, A, S) ints summing to n per row
    reward_numerators: np.ndarray  # (S, A) ints in [0, n]
    horizon: int
    initial: int = 0

    def __post_init__(self):
        k = np.asarray(self.transition_numerators, dtype=np.int64)
        r = np.asarray(self.reward_numerators, dtype=np.int64)
        n = self.grid.n
        if k.ndim != 3 or r.shape != k.shape[:2]:
            raise ValueError("numerator arrays have inconsistent shapes")
        if k.min() < 0 or k.max() > n or r.min() < 0 or r.max() > n:
            raise ValueError("numerators must lie in [0, n]")
        if np.any(k.sum(axis=-1) != n):
            raise ValueError("every transition row must sum to n exactly")
        k.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition_numerators", k)
        object.__setattr__(self, "reward_numerators", r)

    @property
    def num_states(self) -> int:
        return self.transition_numerators.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition_numerators.shape[1]

    def to_tabular(self) -> TabularMDP:
        n = self.grid.n
        return TabularMDP.from_arrays(self.transition_numerators / n,
                                      self.reward_numerators / n, self.horizon, self.initial)


def compositions(n: int, parts: int) -> np.ndarray:
    """All ways to write ``n`` as an ordered sum of ``parts`` non-negative ints.

    Rows come out in lexicographic order.
    """
    rows = []
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        edges = (-1,) + bars + (n + parts - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(parts)])
    return np.array(rows, dtype=np.int64).reshape(-1, parts)


def grid_mdp_count(S: int, A: int, grid: GridSpec) -> int:
    n = grid.n
    return (n + 1) ** (S * A) * math.comb(n + S - 1, S - 1) ** (S * A)


def grid_count_bound(S: int, A: int, grid: GridSpec) -> int:
    return (grid.n + 1) ** (S * S * A + S * A)


def _check_budget(S: int, A: int, grid: GridSpec, budget: int) -> int:
    count = grid_mdp_count(S, A, grid)
    if count > budget:
        raise BudgetExceededError(count, budget)
    return count


def _decode(indices: np.ndarray, S: int, A: int, n: int, comps: np.ndarray):
    """Mixed-radix decode: rewards are the fast digits, transition rows the slow ones."""
    SA = S * A
    B = len(indices)
    rewards = np.empty((B, SA), dtype=np.int64)
    rows = np.empty((B, SA), dtype=np.int64)
    rest = indices.copy()
    for j in range(SA - 1, -1, -1):
        rewards[:, j] = rest % (n + 1)
        rest //= n + 1
    C = len(comps)
    for j in range(SA - 1, -1, -1):
        rows[:, j] = rest % C
        rest //= C
    return rewards.reshape(B, S, A), comps[rows].reshape(B, S, A, S)


def iter_grid_batches(S: int, A: int, grid: GridSpec, batch_size: int = 1 << 16,
                      budget: int = DEFAULT_BUDGET) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(start_index, reward_numerators, transition_numerators)`` batches."""
    total = _check_budget(S, A, grid, budget)
    comps = compositions(grid.n, S)

    def gen():
        for start in range(0, total, batch_size):
            idx = np.arange(start, min(start + batch_size, total), dtype=np.int64)
            r, k = _decode(idx, S, A, grid.n, comps)
            yield start, r, k

    return gen()


def enumerate_discretized_mdps(S: int, A: int, H: int, grid: GridSpec,
                               budget: int = DEFAULT_BUDGET,
                               initial: int = 0) -> Iterator[DiscretizedMDP]:
    """Every grid MDP exactly once. The budget is checked before anything is yielded."""
    batches = iter_grid_batches(S, A, grid, budget=budget)

    def gen():
        for _, rs, ks in batches:
            for r, k in zip(rs, ks):
                yield DiscretizedMDP(grid, k, r, H, initial)

    return gen()


def grid_mdp_at(index: int, S: int, A: int, H: int, grid: GridSpec, initial: int = 0) -> DiscretizedMDP:
    r, k = _decode(np.array([index], dtype=np.int64), S, A, grid.n, compositions(grid.n, S))
    return DiscretizedMDP(grid, k[0], r[0], H, initial)


def round_to_grid(mdp: TabularMDP, grid: GridSpec) -> DiscretizedMDP:
    """Nearest grid model with zero-preserving transitions.

    Rewards go to the nearest grid point (ties down, clamped to [0, 1]).
    Transitions are rounded up, then the surplus is taken back one grid step
    at a time from the lowest-indexed successors that had positive mass.
    """
    n = grid.n
    S, A = mdp.num_states, mdp.num_actions
    ER = mdp.expected_rewards * n
    r = np.ceil(ER - 0.5).astype(np.int64)  # nearest, exact halves go down
    snap = np.abs(ER - np.round(ER)) <= _SNAP_TOL * n
    r[snap] = np.round(ER[snap]).astype(np.int64)
    r = np.clip(r, 0, n)

    P = mdp.transitions
    scaled = P * n
    k = np.ceil(scaled).astype(np.int64)
    # values within float noise of a grid point are taken to be on it
    snap = np.abs(scaled - np.round(scaled)) <= _SNAP_TOL * n
    k[snap] = np.round(scaled[snap]).astype(np.int64)
    k[P == 0] = 0
    for s in range(S):
        for a in range(A):
            surplus = int(k[s, a].sum()) - n
            if surplus < 0:
                raise AssertionError(f"row ({s},{a}) rounded below one; input row invalid")
            if surplus == 0:
                continue
            candidates = np.flatnonzero((P[s, a] > 0) & (k[s, a] > 0))
            if surplus > len(candidates):
                raise AssertionError(f"surplus {surplus} exceeds positive successors in row ({s},{a})")
            k[s, a, candidates[:surplus]] -= 1
    initial = mdp.initial if mdp.has_fixed_initial else 0
    return DiscretizedMDP(grid, k, r, mdp.horizon, initial)


def perturbation_gap(mdp: TabularMDP, grid: GridSpec, policy: NonStationaryPolicy) -> float:
    """Largest value difference over admissible ``(s, h)`` between ``mdp`` and its rounding."""
    rounded = round_to_grid(mdp, grid).to_tabular()
    V = policy_value(mdp, policy).V
    Vhat = policy_value(rounded, policy).V
    mask = admissible_mask(mdp)
    return float(np.max(np.abs(V - Vhat)[mask]))


def perturbation_bound(horizon: int, num_states: int, grid: GridSpec) -> float:
    """``(1 + (H - 1)(S + 1)) / n``, the step-1 bound of the rounding induction."""
    return (1 + (horizon - 1) * (num_states + 1)) / grid.n


def _exact_optimal_tables(rewards: np.ndarray, trans: np.ndarray, H: int, n: int) -> np.ndarray:
    """Batched integer backward induction; returns ``(B, H, S)`` greedy action tables.

    Values at step ``h`` are kept as integers in units of ``n**-(H - h)`` so
    ties are exact and resolved to the lowest action.
    """
    B, S, A = rewards.shape
    exact_int64 = H * float(n) ** (H + 1) * max(S, 1) < 2.0 ** 62
    dtype = np.int64 if exact_int64 else object
    R = rewards.astype(dtype)
    K = trans.astype(dtype)
    W = np.zeros((B, S), dtype=dtype)
    tables = np.empty((B, H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        scale = n ** (H - h - 1)
        Q = R * scale + (K * W[:, None, None, :]).sum(axis=-1)
        if dtype is object:
            Q = Q.astype(object)
        act = np.argmax(Q, axis=-1)
        tables[:, h] = act
        W = np.take_along_axis(Q, act[..., None], axis=-1)[..., 0]
    return tables


@dataclass
class PolicyNet:
    """Deduplicated optimal policies of every grid MDP.

    ``first_source[i]`` is the enumeration index of the first grid MDP whose
    optimal policy is ``policies[i]``; ``source_count[i]`` counts them all.
    """

    policies: list[NonStationaryPolicy]
    first_source: list[int]
    source_count: list[int]
    grid: GridSpec
    enumerated: int
    bound: int
    shape: tuple[int, int, int] = (0, 0, 0)
    _index: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.policies)

    def _lookup(self) -> dict:
        if len(self._index) != len(self.policies):
            self._index = {p.key(): i for i, p in enumerate(self.policies)}
        return self._index

    def __contains__(self, policy: NonStationaryPolicy) -> bool:
        return policy.key() in self._lookup()

    def index_of(self, policy: NonStationaryPolicy) -> int:
        return self._lookup()[policy.key()]


def build_policy_net(S: int, A: int, H: int, grid: GridSpec, budget: int = DEFAULT_BUDGET,
                     batch_size: int = 1 << 16, initial: int = 0) -> PolicyNet:
    """Optimal policy (lowest-action ties) of every grid MDP, deduplicated by table."""
    batches = iter_grid_batches(S, A, grid, batch_size=batch_size, budget=budget)
    n = grid.n
    keys: dict[bytes, int] = {}
    policies: list[NonStationaryPolicy] = []
    first: list[int] = []
    counts: list[int] = []
    total = 0
    for start, rs, ks in batches:
        tables = _exact_optimal_tables(rs, ks, H, n)
        flat = np.ascontiguousarray(tables.reshape(len(tables), -1))
        rowkeys = flat.view(np.dtype((np.void, flat.dtype.itemsize * flat.shape[1])))[:, 0]
        uniq, first_pos, inverse = np.unique(rowkeys, return_index=True, return_inverse=True)
        per_uniq = np.bincount(inverse.ravel(), minlength=len(uniq))
        for u in np.argsort(first_pos, kind="stable"):
            key = uniq[u].tobytes()
            pos = keys.get(key)
            if pos is None:
                keys[key] = len(policies)
                policies.append(NonStationaryPolicy(tables[first_pos[u]]))
                first.append(start + int(first_pos[u]))
                counts.append(int(per_uniq[u]))
            else:
                counts[pos] += int(per_uniq[u])
        total += len(tables)
    return PolicyNet(policies, first, counts, grid, total, grid_count_bound(S, A, grid), (S, A, H))

"""Policy selection by trajectory synthesis (Main) and the naive Monte Carlo baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mdp import EnvironmentHandle, NonStationaryPolicy, stack_tables
from .net import DEFAULT_BUDGET, GridSpec, build_policy_net
from .synthesis import repetitions, sim_all


def num_copies(epsilon: float, delta: float, num_policies: int, scale: float = 1.0) -> int:
    """``max(64 ln(4N/d)/eps^2, 192 ln(2N/d)/eps)`` scaled and rounded up."""
    f = max(64 * math.log(4 * num_policies / delta) / epsilon**2,
            192 * math.log(2 * num_policies / delta) / epsilon)
    return max(1, math.ceil(scale * f))


@dataclass(frozen=True)
class AlgoConfig:
    """Accuracy/confidence targets plus the knobs that size SimAll.

    ``scale`` multiplies both the copy count and the repetitions. When
    ``union_bound_size`` is set it replaces ``|Pi|`` in the copy-count
    formula, which lets several policy sets share one copy count.
    """

    epsilon: float
    delta: float
    scale: float = 1.0
    seed: int = 0
    union_bound_size: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")

    @property
    def delta_sim(self) -> float:
        return self.epsilon / 8

    def copies(self, num_policies: int) -> int:
        n = self.union_bound_size or num_policies
        return num_copies(self.epsilon, self.delta, n, self.scale)

    def tau(self, num_states: int, num_actions: int) -> int:
        return repetitions(num_states, num_actions, self.delta_sim, self.scale)

    def derived(self, num_policies: int, num_states: int, num_actions: int) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta, "delta_sim": self.delta_sim,
                "scale": self.scale, "seed": self.seed, "num_policies": num_policies,
                "F": self.copies(num_policies), "tau": self.tau(num_states, num_actions)}


@dataclass
class EvaluationReport:
    means: np.ndarray
    fail_counts: np.ndarray
    chosen: int
    episodes: int
    rollout_events: int
    meta: dict = field(default_factory=dict)
    rolled_out: np.ndarray | None = None

    COLUMNS = ("policy_index", "mean_return", "fail_count", "rolled_out", "chosen")

    def rows(self) -> list[dict]:
        rolled = self.rolled_out if self.rolled_out is not None else np.zeros(len(self.means), bool)
        return [{"policy_index": j, "mean_return": float(m), "fail_count": int(f),
                 "rolled_out": int(r), "chosen": int(j == self.chosen)}
                for j, (m, f, r) in enumerate(zip(self.means, self.fail_counts, rolled))]


def argmax_lowest(values: np.ndarray) -> int:
    """Index of the largest value; the first one wins ties."""
    return int(np.argmax(np.asarray(values)))


def _check(env: EnvironmentHandle, policies: Sequence[NonStationaryPolicy]) -> None:
    if not policies:
        raise ValueError("policy set must be non-empty")
    for p in policies:
        p.check_compatible(env.model)


def main(env: EnvironmentHandle, policies: Sequence[NonStationaryPolicy], cfg: AlgoConfig,
         mode: str = "batched", diagnostics: bool = False):
    """Score every policy from SimAll trajectories and return the empirical best.

    A ``FAIL`` scores 0. Returns ``(policy, EvaluationReport)``.
    """
    _check(env, policies)
    m = env.model
    meta = cfg.derived(len(policies), m.num_states, m.num_actions)
    start = env.episodes_sampled
    res = sim_all(policies, cfg.delta_sim, meta["F"], env, tau=meta["tau"], mode=mode,
                  diagnostics=diagnostics)
    means = res.returns.mean(axis=1)
    chosen = argmax_lowest(means)
    meta["decisions"] = res.decisions
    report = EvaluationReport(means, res.fail_counts, chosen, env.episodes_sampled - start,
                              res.rollout_events, meta, res.rolled_out)
    return policies[chosen], report


def main_with_net(env: EnvironmentHandle, epsilon: float, delta: float,
                  grid: GridSpec | None = None, budget: int = DEFAULT_BUDGET,
                  scale: float = 1.0, seed: int = 0):
    """Build the policy net at ``grid`` and run :func:`main` on it.

    With ``grid=None`` the net resolution ``epsilon / (32 H S)`` is used,
    which is only feasible for trivially small models.
    """
    m = env.model
    if grid is None:
        grid = GridSpec.from_epsilon(epsilon / (32 * m.horizon * m.num_states))
    net = build_policy_net(m.num_states, m.num_actions, m.horizon, grid, budget=budget,
                           initial=m.initial)
    cfg = AlgoConfig(epsilon, delta, scale, seed)
    policy, report = main(env, net.policies, cfg)
    report.meta.update(net_size=len(net), net_enumerated=net.enumerated, net_bound=net.bound,
                       grid_n=grid.n)
    return policy, report


def naive_monte_carlo(env: EnvironmentHandle, policies: Sequence[NonStationaryPolicy], copies: int):
    """Sample ``copies`` real episodes per policy and return the empirical best."""
    _check(env, policies)
    if copies < 1:
        raise ValueError("need at least one episode per policy")
    start = env.episodes_sampled
    means = np.empty(len(policies))
    tables = stack_tables(policies)
    for j in range(len(policies)):
        _, _, rewards = env.sample_episodes(tables[j], np.zeros(copies, dtype=np.int64))
        means[j] = rewards.sum(axis=1).mean()
    chosen = argmax_lowest(means)
    report = EvaluationReport(means, np.zeros(len(policies), dtype=np.int64), chosen,
                              env.episodes_sampled - start, 0,
                              {"F": copies, "num_policies": len(policies)})
    return policies[chosen], report

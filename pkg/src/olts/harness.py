"""Experiment driver: sweeps, replay-fidelity tests and deterministic CSV reports."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .algorithm import AlgoConfig, main, naive_monte_carlo
from .generators import policy_set_with, random_mdp, random_policies
from .mdp import EnvironmentHandle, NonStationaryPolicy, TabularMDP
from .oracle import optimal_policy, policy_value
from .synthesis import _fill, repetitions, simulate_batch


@dataclass(frozen=True)
class Thresholds:
    """Empirical targets used by the acceptance checks, kept in one place."""

    tv: float = 0.02
    fail_slack: float = 0.02
    success_fraction: float = 0.9
    horizon_ratio: float = 5.0
    policy_set_ratio: float = 6.0
    fidelity_max_bins_horizon: int = 4
    fidelity_max_bins_states: int = 3


THRESHOLDS = Thresholds()

SWEEP_COLUMNS = (
    "axis", "value", "rep", "algorithm", "num_states", "num_actions", "horizon",
    "num_policies", "epsilon", "delta", "scale", "F", "tau", "mdp_seed", "env_seed",
    "episodes", "rollout_events", "rollout_bound", "chosen_index", "optimal_index",
    "chosen_value", "optimal_value", "suboptimality", "eps_optimal",
)
SCHEMA_VERSION = 1
AXES = ("horizon", "num_policies", "epsilon")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    repetitions: int = 1
    seed: int = 0
    algorithms: tuple = ("olts", "naive")
    scale: float = 0.05
    num_states: int = 2
    num_actions: int = 2
    horizon: int = 16
    num_policies: int = 33
    epsilon: float = 0.25
    delta: float = 0.1
    union_bound_size: int | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        vals = tuple(self.values)
        if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("axis values must be strictly increasing")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        bad = set(self.algorithms) - {"olts", "naive"}
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")
        object.__setattr__(self, "values", vals)

    def point(self, value) -> dict:
        p = {"horizon": self.horizon, "num_policies": self.num_policies, "epsilon": self.epsilon}
        p[self.axis] = value
        return p


@dataclass
class StatTestResult:
    name: str
    statistic: float
    threshold: float
    sample_sizes: dict
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.statistic <= self.threshold)


@dataclass
class FidelityReport:
    """Two checks of one replay experiment: distribution match and failure rate."""

    tv: StatTestResult
    fail: StatTestResult
    binning: str

    @property
    def passed(self) -> bool:
        return self.tv.passed and self.fail.passed

    @property
    def results(self) -> list[StatTestResult]:
        return [self.tv, self.fail]


@dataclass
class SweepTable:
    rows: list[dict]
    timings: list[dict] = field(default_factory=list)


def point_seeds(seed: int, rep: int, value_index: int) -> tuple[int, int, int]:
    """``(mdp_seed, policy_seed, env_seed)`` for one sweep cell.

    The model depends only on ``(seed, rep)`` so one repetition sees the same
    dynamics at every axis value.
    """
    mdp_seed = int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])
    pol_seed = int(np.random.SeedSequence([seed, rep, value_index, 1]).generate_state(1)[0])
    env_seed = int(np.random.SeedSequence([seed, rep, value_index, 2]).generate_state(1)[0])
    return mdp_seed, pol_seed, env_seed


def build_instance(num_states: int, num_actions: int, horizon: int, num_policies: int,
                   mdp_seed: int, policy_seed: int):
    """Random model plus ``num_policies - 1`` random policies and the optimal one."""
    mdp = random_mdp(num_states, num_actions, horizon, np.random.default_rng(mdp_seed))
    pi_star, _ = optimal_policy(mdp)
    rng = np.random.default_rng(policy_seed)
    others = random_policies(num_policies - 1, num_states, num_actions, horizon, rng)
    policies, _ = policy_set_with(others, pi_star, rng)
    return mdp, policies


def rollout_bound(num_states: int, num_actions: int, horizon: int) -> float:
    return num_states * num_actions * (math.log2(horizon) + 2)


def run_once(mdp: TabularMDP, policies: Sequence[NonStationaryPolicy], algorithm: str,
             cfg: AlgoConfig, env_seed: int, copies: int | None = None) -> dict:
    """One algorithm run scored against the exact optimum; returns a result row."""
    env = EnvironmentHandle(mdp, env_seed)
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    F = cfg.copies(len(policies)) if copies is None else copies
    if algorithm == "olts":
        chosen, report = main(env, policies, cfg)
        tau = report.meta["tau"]
    elif algorithm == "naive":
        chosen, report = naive_monte_carlo(env, policies, F)
        tau = 0
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    _, opt = optimal_policy(mdp)
    values = [policy_value(mdp, p).root_value for p in policies]
    v_chosen = values[report.chosen]
    sub = opt.root_value - v_chosen
    return {"num_states": S, "num_actions": A, "horizon": H, "num_policies": len(policies),
            "epsilon": cfg.epsilon, "delta": cfg.delta, "scale": cfg.scale, "F": F, "tau": tau,
            "env_seed": env_seed, "episodes": report.episodes,
            "rollout_events": report.rollout_events,
            "rollout_bound": rollout_bound(S, A, H), "chosen_index": report.chosen,
            "optimal_index": int(np.argmax(values)), "chosen_value": v_chosen,
            "optimal_value": opt.root_value, "suboptimality": sub,
            "eps_optimal": int(sub <= cfg.epsilon)}


def run_sweep(spec: SweepSpec) -> SweepTable:
    """One row per (axis value, repetition, algorithm); deterministic given ``spec.seed``."""
    table = SweepTable([])
    for vi, value in enumerate(spec.values):
        pt = spec.point(value)
        for rep in range(spec.repetitions):
            mdp_seed, pol_seed, env_seed = point_seeds(spec.seed, rep, vi)
            mdp, policies = build_instance(spec.num_states, spec.num_actions, pt["horizon"],
                                           pt["num_policies"], mdp_seed, pol_seed)
            cfg = AlgoConfig(pt["epsilon"], spec.delta, spec.scale, spec.seed,
                             spec.union_bound_size)
            for alg in spec.algorithms:
                t0 = time.perf_counter()
                row = run_once(mdp, policies, alg, cfg, env_seed)
                dt = time.perf_counter() - t0
                row.update(axis=spec.axis, value=value, rep=rep, algorithm=alg, mdp_seed=mdp_seed)
                table.rows.append({k: row[k] for k in SWEEP_COLUMNS})
                table.timings.append({"axis": spec.axis, "value": value, "rep": rep,
                                      "algorithm": alg, "wall_time": dt})
    return table


def _tv_rows(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return 1.0
    both = np.concatenate([a, b])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.ravel()
    k = inv.max() + 1
    pa = np.bincount(inv[: len(a)], minlength=k) / len(a)
    pb = np.bincount(inv[len(a):], minlength=k) / len(b)
    return float(0.5 * np.abs(pa - pb).sum())


def _marginal_tv(sa, ra, sb, rb) -> float:
    """Largest per-step TV over the joint (state, reward) marginal."""
    worst = 0.0
    for h in range(sa.shape[1]):
        ca = np.stack([sa[:, h], ra[:, h] if h < ra.shape[1] else np.zeros(len(sa))], axis=1)
        cb = np.stack([sb[:, h], rb[:, h] if h < rb.shape[1] else np.zeros(len(sb))], axis=1)
        worst = max(worst, _tv_rows(ca, cb))
    return worst


def fidelity_test(mdp: TabularMDP, pi_fill: NonStationaryPolicy, pi_test: NonStationaryPolicy,
                  repetitions_n: int, delta_sim: float = 0.125, scale: float = 1.0, seed: int = 0,
                  max_batch_episodes: int = 1 << 21, thresholds: Thresholds = THRESHOLDS,
                  max_horizon: int = 64) -> FidelityReport:
    """Compare replayed trajectories of ``pi_test`` against real ones.

    Each repetition builds a fresh single-copy simulator, rolls out
    ``pi_fill`` and then simulates ``pi_test``. The non-failed outputs are
    compared with ``repetitions_n`` real episodes of ``pi_test``. Full
    trajectories are binned for small models; otherwise per-step marginals
    are compared.
    """
    if mdp.horizon > max_horizon:
        raise ValueError(f"horizon {mdp.horizon} exceeds the fidelity cap {max_horizon}")
    pi_fill.check_compatible(mdp)
    pi_test.check_compatible(mdp)
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    tau = repetitions(S, A, delta_sim, scale)
    N = repetitions_n
    env = EnvironmentHandle(mdp, seed)
    batch = max(1, max_batch_episodes // tau)
    sim_states, sim_rewards = [], []
    fails = 0
    for start in range(0, N, batch):
        B = min(batch, N - start)
        st, ac, rw = env.sample_episodes(pi_fill.table, np.zeros(B * tau, dtype=np.int64))
        shape = (B, S, A, H)
        nxt = np.zeros(shape, dtype=np.int64)
        rew = np.zeros(shape)
        epi = np.zeros(shape, dtype=np.int64)
        stored = np.zeros((B, S, A), dtype=np.int64)
        length = np.zeros((B, S, A), dtype=np.int64)
        _fill(nxt, rew, epi, stored, length, st.reshape(B, tau, H + 1), ac.reshape(B, tau, H),
              rw.reshape(B, tau, H), np.tile(np.arange(tau), (B, 1)))
        failed, _, (s_out, _, r_out) = simulate_batch(nxt, rew, length, pi_test.table,
                                                      mdp.initial, keep=True)
        fails += int(failed.sum())
        sim_states.append(s_out[~failed])
        sim_rewards.append(r_out[~failed])
    sim_s = np.concatenate(sim_states)
    sim_r = np.concatenate(sim_rewards)
    real_s, _, real_r = env.sample_episodes(pi_test.table, np.zeros(N, dtype=np.int64))
    binned = H <= thresholds.fidelity_max_bins_horizon and S <= thresholds.fidelity_max_bins_states
    if binned:
        tv = _tv_rows(np.concatenate([sim_s, sim_r], axis=1),
                      np.concatenate([real_s, real_r], axis=1))
    else:
        tv = _marginal_tv(sim_s, sim_r, real_s, real_r)
    sizes = {"simulated": len(sim_s), "real": N, "repetitions": N, "tau": tau}
    fail_freq = fails / N
    return FidelityReport(
        StatTestResult("total-variation", tv, thresholds.tv, sizes),
        StatTestResult("fail-frequency", fail_freq, 2 * delta_sim + thresholds.fail_slack, sizes),
        "trajectory" if binned else "per-step-marginal")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    """Rows as CSV text with a fixed column order and round-trip float formatting."""
    cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def read_csv(path_or_text) -> list[dict]:
    """Parse a CSV written by :func:`to_csv`, converting numeric cells back."""
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) else path_or_text
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        out.append({k: _parse(v) for k, v in r.items()})
    return out


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def summarize(rows: Sequence[dict], meta: dict | None = None) -> str:
    lines = []
    for k, v in (meta or {}).items():
        if isinstance(v, (int, float, str, bool, np.integer, np.floating)) or v is None:
            lines.append(f"{k}: {_fmt(v)}")
    if not rows:
        lines.append("no data")
        return "\n".join(lines) + "\n"
    if "algorithm" in rows[0] and "value" in rows[0]:
        groups: dict = {}
        for r in rows:
            groups.setdefault((r["value"], r["algorithm"]), []).append(r)
        for (value, alg), rs in groups.items():
            eps = np.mean([r["episodes"] for r in rs])
            ro = max(r["rollout_events"] for r in rs)
            ok = sum(r["eps_optimal"] for r in rs)
            lines.append(f"{rs[0]['axis']}={_fmt(value)} {alg}: mean_episodes={_fmt(float(eps))} "
                         f"max_rollout_events={ro} eps_optimal={ok}/{len(rs)}")
    else:
        lines.append(f"rows: {len(rows)}")
    return "\n".join(lines) + "\n"


def default_out_dir() -> Path:
    return Path(os.environ.get("OLTS_OUT_DIR", "olts-out"))


def emit_report(rows: Sequence[dict], meta: dict | None = None, out_dir=None,
                name: str = "report", columns: Sequence[str] | None = None,
                timings: Sequence[dict] | None = None) -> dict:
    """Write ``<name>.csv`` and ``<name>_summary.txt`` (plus optional timings).

    Wall-clock timings go to their own file so the main CSV stays
    byte-identical across runs with equal seeds.
    """
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{name}.csv", "summary": out / f"{name}_summary.txt"}
    paths["csv"].write_text(to_csv(rows, columns))
    paths["summary"].write_text(summarize(rows, meta))
    if timings:
        paths["timings"] = out / f"{name}_timings.csv"
        paths["timings"].write_text(to_csv(timings))
    return paths

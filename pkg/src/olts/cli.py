"""Command-line driver: ``python -m olts <command>``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import formats
from .algorithm import AlgoConfig, main, naive_monte_carlo
from .generators import exhaustive_policies, random_mdp, random_policies, two_state_battery
from .harness import (SWEEP_COLUMNS, THRESHOLDS, SweepSpec, default_out_dir, emit_report,
                      fidelity_test, run_sweep, to_csv)
from .mdp import EnvironmentHandle, NonStationaryPolicy
from .net import DEFAULT_BUDGET, BudgetExceededError, GridSpec, build_policy_net
from .oracle import optimal_policy, policy_value, visit_count_pmf


DECISION_COLUMNS = ("policy_index", "fail_count", "threshold", "rollout", "episodes",
                    "rollout_events")


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _load_model(args):
    if args.mdp:
        return formats.load_mdp(args.mdp)
    if args.random_mdp:
        S, A, H = _ints(args.random_mdp)
        return random_mdp(S, A, H, np.random.default_rng(args.mdp_seed))
    return two_state_battery(3)


def _add_model_args(p):
    p.add_argument("--mdp", help="model file (JSON)")
    p.add_argument("--random-mdp", metavar="S,A,H", help="generate a random model instead")
    p.add_argument("--mdp-seed", type=int, default=0)


def cmd_eval(args) -> int:
    mdp = _load_model(args)
    policy = (formats.load_policy(args.policy, mdp.horizon, mdp.num_states) if args.policy
              else optimal_policy(mdp)[0])
    vt = policy_value(mdp, policy)
    rows = []
    for h in range(mdp.horizon):
        for s in range(mdp.num_states):
            row = {"step": h + 1, "state": s, "V": float(vt.V[h, s])}
            row.update({f"Q{a}": float(vt.Q[h, s, a]) for a in range(mdp.num_actions)})
            rows.append(row)
    sys.stdout.write(to_csv(rows))
    sys.stdout.write(f"# root_value={vt.root_value!r}\n")
    return 0


def cmd_pmf(args) -> int:
    mdp = _load_model(args)
    policy = (formats.load_policy(args.policy, mdp.horizon, mdp.num_states) if args.policy
              else optimal_policy(mdp)[0])
    pmf = visit_count_pmf(mdp, policy, args.state, args.action)
    sys.stdout.write(to_csv([{"count": k, "probability": float(p)} for k, p in enumerate(pmf)]))
    return 0


def cmd_net(args) -> int:
    grid = GridSpec(args.n)
    try:
        net = build_policy_net(args.states, args.actions, args.horizon, grid, budget=args.budget)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out_dir) if args.out_dir else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    formats.save_policy_archive(net.policies, out / "net.zip")
    manifest = [{"num_states": args.states, "num_actions": args.actions, "horizon": args.horizon,
                 "n": grid.n, "net_size": len(net), "enumerated": net.enumerated,
                 "bound": net.bound}]
    (out / "net_manifest.csv").write_text(to_csv(manifest))
    print(f"net: {len(net)} policies from {net.enumerated} grid models (bound {net.bound})")
    return 0


def _policies(spec: str, mdp, seed: int, budget: int) -> list[NonStationaryPolicy]:
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    kind, _, arg = spec.partition(":")
    if kind == "random":
        return random_policies(int(arg or 32), S, A, H, np.random.default_rng(seed))
    if kind == "exhaustive":
        return exhaustive_policies(S, A, H)
    if kind == "file":
        return formats.load_policies(arg, H, S)
    if kind == "net":
        return build_policy_net(S, A, H, GridSpec(int(arg or 2)), budget=budget,
                                initial=mdp.initial).policies
    raise ValueError(f"unknown policy source {spec!r}")


def cmd_run(args) -> int:
    mdp = _load_model(args)
    policies = _policies(args.policies, mdp, args.seed, args.budget)
    if args.include_optimal:
        star = optimal_policy(mdp)[0]
        if star not in policies:
            policies = policies + [star]
    cfg = AlgoConfig(args.epsilon, args.delta, args.scale, args.seed)
    env = EnvironmentHandle(mdp, args.seed)
    if args.algorithm == "olts":
        chosen, report = main(env, policies, cfg)
    else:
        chosen, report = naive_monte_carlo(env, policies, cfg.copies(len(policies)))
    opt = optimal_policy(mdp)[1].root_value
    sub = opt - policy_value(mdp, chosen).root_value
    meta = {k: v for k, v in report.meta.items() if k != "decisions"}
    meta.update(algorithm=args.algorithm, episodes=report.episodes,
                rollout_events=report.rollout_events, chosen=report.chosen, suboptimality=sub)
    emit_report(report.rows(), meta, args.out_dir, name="run", columns=report.COLUMNS)
    if args.algorithm == "olts":
        emit_report(report.meta["decisions"], None, args.out_dir, name="decisions",
                    columns=DECISION_COLUMNS)
    print(f"chosen={report.chosen} episodes={report.episodes} "
          f"rollout_events={report.rollout_events} suboptimality={sub!r} "
          f"eps_optimal={int(sub <= args.epsilon)}")
    return 0


def cmd_sweep(args) -> int:
    values = _floats(args.values) if args.axis == "epsilon" else _ints(args.values)
    spec = SweepSpec(args.axis, tuple(values), args.reps, args.seed, tuple(args.algorithms.split(",")),
                     args.scale, args.num_states, args.num_actions, args.horizon, args.num_policies,
                     args.epsilon, args.delta, args.union_bound_size)
    table = run_sweep(spec)
    meta = {k: v for k, v in vars(spec).items() if not isinstance(v, tuple)}
    paths = emit_report(table.rows, meta, args.out_dir, name="sweep", columns=SWEEP_COLUMNS,
                        timings=table.timings)
    sys.stdout.write(paths["summary"].read_text())
    return 0


def cmd_fidelity(args) -> int:
    mdp = _load_model(args)
    H, S = mdp.horizon, mdp.num_states
    fill = (formats.load_policy(args.fill, H, S) if args.fill
            else random_policies(1, S, mdp.num_actions, H, np.random.default_rng(args.seed))[0])
    test = formats.load_policy(args.test, H, S) if args.test else fill
    rep = fidelity_test(mdp, fill, test, args.repetitions, args.delta_sim, args.scale, args.seed)
    rows = [{"test": r.name, "statistic": r.statistic, "threshold": r.threshold,
             "passed": r.passed, "simulated": r.sample_sizes["simulated"],
             "real": r.sample_sizes["real"]} for r in rep.results]
    emit_report(rows, {"binning": rep.binning, "tau": rep.tv.sample_sizes["tau"]}, args.out_dir,
                name="fidelity")
    sys.stdout.write(to_csv(rows))
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="olts", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--scale", type=float, default=1.0, help="multiplier for F and tau")
    common.add_argument("--out-dir", default=None, help="output directory (env OLTS_OUT_DIR)")
    common.add_argument("--format", choices=["csv"], default="csv")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="exact policy values as CSV")
    _add_model_args(p)
    p.add_argument("--policy", help="policy file (default: the optimal policy)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pmf", parents=[common], help="visit-count distribution of one pair")
    _add_model_args(p)
    p.add_argument("--policy")
    p.add_argument("--state", type=int, required=True)
    p.add_argument("--action", type=int, required=True)
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("net", parents=[common], help="build the grid policy net")
    p.add_argument("--states", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="inverse grid resolution")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("run", parents=[common], help="select a policy with one algorithm run")
    _add_model_args(p)
    p.add_argument("--policies", default="random:32",
                   help="net[:n] | file:PATH | random:k | exhaustive")
    p.add_argument("--include-optimal", action="store_true")
    p.add_argument("--algorithm", choices=["olts", "naive"], default="olts")
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="episode counts along one axis")
    p.add_argument("--axis", choices=["horizon", "num_policies", "epsilon"], required=True)
    p.add_argument("--values", required=True, help="comma-separated, increasing")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--algorithms", default="olts,naive")
    p.add_argument("--num-states", type=int, default=2)
    p.add_argument("--num-actions", type=int, default=2)
    p.add_argument("--horizon", type=int, default=16)
    p.add_argument("--num-policies", type=int, default=33)
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--union-bound-size", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fidelity", parents=[common], help="replayed vs real trajectory distributions")
    _add_model_args(p)
    p.add_argument("--fill", help="policy that fills the buffer")
    p.add_argument("--test", help="policy to replay (default: the fill policy)")
    p.add_argument("--repetitions", "-N", type=int, default=50_000)
    p.add_argument("--delta-sim", type=float, default=0.125)
    p.set_defaults(func=cmd_fidelity)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (formats.FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(run())

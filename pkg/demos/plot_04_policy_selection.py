"""
Choosing a policy: synthesis versus plain Monte Carlo
=====================================================

Both algorithms return the policy with the best empirical return. The
naive baseline pays for every policy separately. Synthesis pays only on
rollouts, whose number does not grow with the size of the policy set.
"""

import numpy as np

from olts import AlgoConfig, EnvironmentHandle, main, naive_monte_carlo, optimal_policy, policy_value
from olts.harness import SweepSpec, build_instance, run_sweep, summarize

mdp, policies = build_instance(2, 2, horizon=16, num_policies=33, mdp_seed=0, policy_seed=1)
cfg = AlgoConfig(epsilon=0.25, delta=0.1, scale=0.05)
v_star = optimal_policy(mdp)[1].root_value

chosen, report = main(EnvironmentHandle(mdp, 2), policies, cfg)
print("F =", report.meta["F"], "tau =", report.meta["tau"])
print("synthesis: episodes", report.episodes, "rollouts", report.rollout_events,
      "suboptimality", v_star - policy_value(mdp, chosen).root_value)

chosen, report = naive_monte_carlo(EnvironmentHandle(mdp, 2), policies, cfg.copies(33))
print("naive    : episodes", report.episodes,
      "suboptimality", v_star - policy_value(mdp, chosen).root_value)

# growing the policy set: naive cost is linear in |Pi|, synthesis cost stays flat
# (at this small scale its constant still exceeds the naive total)
spec = SweepSpec("num_policies", (9, 33, 129), repetitions=2, seed=0, union_bound_size=129)
table = run_sweep(spec)
print(summarize(table.rows))

# growing the horizon barely changes the synthesis cost
spec = SweepSpec("horizon", (8, 32, 128), repetitions=2, seed=0, algorithms=("olts",),
                 num_policies=17)
print(summarize(run_sweep(spec).rows))

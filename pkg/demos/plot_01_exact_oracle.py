"""
Exact values, visit counts and the potential
=============================================

Everything here is computed exactly by backward induction or forward
dynamic programming on a known model. No sampling is involved.
"""

import numpy as np

from olts import (NonStationaryPolicy, admissible_pairs, mu_potential_table, optimal_policy,
                  policy_value, visit_count_pmf)
from olts.generators import random_policies, two_state_battery

# a small stochastic model: action 0 tends to stay, action 1 tends to switch
mdp = two_state_battery(horizon=6)
print("transitions P[s, a, s']:\n", mdp.transitions)

# optimal policy and its value from the fixed start state
pi_star, vt = optimal_policy(mdp)
print("optimal action table (rows are steps):\n", pi_star.table)
print("V* =", vt.root_value)

# any fixed policy can be evaluated the same way
stay = NonStationaryPolicy.constant(6, 2, 0)
print("value of always-stay:", policy_value(mdp, stay).root_value)

# how often does the optimal policy play action 1 in state 1?
pmf = visit_count_pmf(mdp, pi_star, 1, 1)
for k, p in enumerate(pmf):
    print(f"  Pr[f = {k}] = {p:.4f}")
print("mean visits:", (np.arange(len(pmf)) * pmf).sum())

# every state is reachable after the first step here
print("admissible (s, h):", sorted(admissible_pairs(mdp)))

# the potential: largest count some policy reaches with probability >= delta
pols = random_policies(8, 2, 2, 6, np.random.default_rng(0))
for delta in (0.5, 0.1, 0.01):
    print(f"mu at delta={delta}:\n", mu_potential_table(mdp, pols, delta))

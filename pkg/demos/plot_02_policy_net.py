"""
Grid models and the policy net
==============================

A grid model has transitions and rewards on {0, 1/n, ..., 1}. Collecting
the optimal policy of every grid model gives a finite policy set that
contains a near-optimal policy for any model of the same size.
"""

import numpy as np

from olts import (GridSpec, build_policy_net, grid_count_bound, grid_mdp_count,
                  optimal_policy, perturbation_bound, perturbation_gap, policy_value,
                  round_to_grid)
from olts.generators import random_mdp, random_policies

# how many grid models are there?
for S, A, n in [(1, 2, 2), (2, 1, 1), (2, 2, 2), (2, 2, 8)]:
    g = GridSpec(n)
    print(f"S={S} A={A} n={n}: {grid_mdp_count(S, A, g)} models "
          f"(counting bound {grid_count_bound(S, A, g)})")

# rounding keeps zeros at zero and moves each entry by at most 1/n
rng = np.random.default_rng(1)
mdp = random_mdp(3, 2, 5, rng)
grid = GridSpec(10)
rounded = round_to_grid(mdp, grid)
print("P[0, 0]      :", mdp.transitions[0, 0])
print("rounded P[0,0]:", rounded.transition_numerators[0, 0] / grid.n)

# values move by at most (1 + (H - 1)(S + 1)) / n
gaps = [perturbation_gap(mdp, grid, p) for p in random_policies(200, 3, 2, 5, rng)]
print(f"largest value gap {max(gaps):.4f}, bound {perturbation_bound(5, 3, grid):.2f}")

# a net over all 2-state, 2-action grid models at n = 4
net = build_policy_net(2, 2, 3, GridSpec(4))
print(f"net: {len(net)} distinct policies from {net.enumerated} grid models")

# the best policy in the net is close to optimal for a fresh model
test = random_mdp(2, 2, 3, rng)
best = max(policy_value(test, p).root_value for p in net.policies)
print(f"V* = {optimal_policy(test)[1].root_value:.4f}, best net policy = {best:.4f}")

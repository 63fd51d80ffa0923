"""
Replaying a buffer instead of sampling
======================================

A rollout fills per-pair sample queues with real episodes. Simulating a
policy then walks the model by popping samples from those queues, so new
policies can be scored without new episodes until some queue runs dry.
"""

import numpy as np

from olts import FAIL, EnvironmentHandle, NonStationaryPolicy, SimOne, sim_all
from olts.generators import random_policies, two_state_battery
from olts.harness import fidelity_test

mdp = two_state_battery(horizon=3)
env = EnvironmentHandle(mdp, seed=0)

sim = SimOne.for_env(env, tau=50)
print("empty buffer:", sim.simulate(NonStationaryPolicy.constant(3, 2, 0)))

# one rollout: 50 episodes of a policy that tries both actions
mixed = NonStationaryPolicy(np.array([[1, 0], [0, 1], [1, 0]]))
z = sim.rollout(mixed)
print("rollout returned", z.records(), "episodes so far:", env.episodes_sampled)
print("samples of (0, 0):", sim.buffer.length[0, 0], "first few:", sim.buffer.sequence(0, 0)[:3])

# replaying other policies is free, and fails only when a queue is exhausted
for p in random_policies(5, 2, 2, 3, np.random.default_rng(1)):
    out = sim.simulate(p)
    print(p.table.ravel(), "->", "Fail" if out is FAIL else round(out.cumulative_reward, 4))
print("episodes after simulating:", env.episodes_sampled)

# many independent copies with the failure-count gate
pols = random_policies(10, 2, 2, 3, np.random.default_rng(2))
res = sim_all(pols, delta_sim=0.125, copies=200, env=EnvironmentHandle(mdp, 3), tau=20)
print("gate fired on policies", np.flatnonzero(res.rolled_out), "episodes", res.episodes)

# replayed trajectories follow the same law as real ones
rep = fidelity_test(mdp, mixed, pols[0], 20_000, seed=4)
for r in rep.results:
    print(f"{r.name}: {r.statistic:.4f} (threshold {r.threshold}) passed={r.passed}")

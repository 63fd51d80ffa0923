"""Online trajectory synthesis for episodic tabular RL.

Horizon-insensitive PAC policy selection: a finite policy set is evaluated
by replaying per-pair samples from a replay buffer, and the environment is
only queried when replay fails too often.
"""
from .mdp import (EnvironmentHandle, ModelViolationError, NonStationaryPolicy, TabularMDP,
                  Trajectory, extend_policy, reduce_initial_distribution, sample_episode, validate)
from .oracle import (ValueTables, admissible_mask, admissible_pairs, mu_potential,
                     mu_potential_table, optimal_policy, policy_value, visit_count_pmf,
                     visit_count_pmfs)
from .net import (BudgetExceededError, DiscretizedMDP, GridSpec, PolicyNet, build_policy_net,
                  enumerate_discretized_mdps, grid_count_bound, grid_mdp_count, perturbation_bound,
                  perturbation_gap, round_to_grid)
from .synthesis import FAIL, ReplayBuffer, SimAllResult, SimOne, repetitions, sim_all
from .algorithm import (AlgoConfig, EvaluationReport, main, main_with_net, naive_monte_carlo,
                        num_copies)

__version__ = "0.1.0"

"""Presets for the four simulations on the two-state example MDP.

Stepsize parameters, horizons and replication counts below are this
package's choices; they are written into every output header.
"""

from dataclasses import replace

import numpy as np

from . import mdp as m
from . import solvers
from .harness import (
    ROLLOUT_STREAM,
    ExperimentConfig,
    MetricSeries,
    aggregate,
    build_appendix_c,
    compute_targets,
    run_experiment,
)
from .learner import geometric_grid, make_rng, rollout_rewards

AVERAGE_REWARD = ExperimentConfig(
    variants=["adaptive_set", "universal"],
    alpha=10.0,
    h=10.0,
    horizon=100_000,
    replications=100,
)
DISCOUNTED = ExperimentConfig(
    variants=["discounted_adaptive", "discounted_universal"],
    gamma=0.99,
    alpha=1000.0,
    h=1000.0,
    horizon=1_000_000,
    replications=100,
)
RATE = ExperimentConfig(
    variants=["adaptive_set"],
    alpha=6.0,
    h=6.0,
    horizon=1_000_000,
    replications=200,
)
FIGURES = (1, 2, 3, 4)


def figure_config(figure, **overrides):
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {FIGURES}")
    base = DISCOUNTED if figure == 4 else AVERAGE_REWARD
    return replace(base, **overrides)


def rate_config(**overrides):
    return replace(RATE, **overrides)


def run_figure(figure, **overrides):
    """Series for one figure; figures 1 and 2 share the same runs."""
    config = figure_config(figure, **overrides)
    if figure == 3:
        return output_policies(config)
    return run_experiment(config)


def output_policies(config, learning=None):
    """Running-average reward of policies read off the learned and reference Q-tables.

    Each learned final iterate is turned into its greedy policy and rolled out
    on its own trajectory.  The optimal policy and the greedy policy of the
    asynchronous fixed point are rolled out as references.
    """
    mdp, behavior = build_appendix_c()
    targets = compute_targets(mdp, behavior, config)
    if learning is None:
        learning = run_experiment(config, targets)
    ks = geometric_grid(config.horizon)
    pi_star = solvers.greedy_policy(targets.q_star, mdp.n_actions)
    pi_bar = solvers.greedy_policy(targets.q_bar, mdp.n_actions)
    header = dict(config.header())
    header["r_star"] = targets.gain
    header["exact_gain"] = {
        "optimal": solvers.policy_average_reward(mdp, pi_star),
        "greedy_qbar": solvers.policy_average_reward(mdp, pi_bar),
    }
    header["optimal_policy_recovery"] = {}
    out = MetricSeries(ks=ks, replications=config.replications, mean={}, stderr={},
                       header=header)

    def rollouts(policies, name):
        runs = [rollout_rewards(mdp, pol, config.horizon,
                                make_rng(config.base_seed, r, ROLLOUT_STREAM),
                                config.initial_state, ks)
                for r, pol in enumerate(policies)]
        mean, se = aggregate(runs)
        out.mean[name] = {"running_avg_reward": mean}
        out.stderr[name] = {"running_avg_reward": se}

    for v, finals in learning.final_q.items():
        pols = [solvers.greedy_policy(q, mdp.n_actions) for q in finals]
        hits = [np.array_equal(p.actions(), pi_star.actions()) for p in pols]
        header["optimal_policy_recovery"][v] = float(np.mean(hits))
        rollouts(pols, f"greedy_{v}")
        out.final_q[v] = finals
    rollouts([pi_star] * config.replications, "optimal")
    rollouts([pi_bar] * config.replications, "greedy_qbar")
    return out


def reference_summary():
    """Exact quantities for the example MDP under its behavior policy."""
    mdp, behavior = build_appendix_c()
    beta = m.tv_contraction_factor(mdp)
    star = solvers.solve_bellman(mdp)
    d = m.stationary_distribution(mdp, behavior)
    bar = solvers.solve_async_bellman(mdp, d)
    return {
        "beta": beta,
        "beta_bar": m.async_contraction_factor(beta, d.min()),
        "d_min": float(d.min()),
        "gain": star.gain,
        "q_star": star.fixed_point,
        "q_bar": bar.fixed_point,
        "d": d,
    }

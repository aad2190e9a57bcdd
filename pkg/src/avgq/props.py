"""Randomized checks of the seminorm and operator inequalities.

Each suite draws ``trials`` random instances and records the worst slack of
its inequality; a suite passes when no instance violates it by more than
``TOL``.  ``check-props`` on the command line runs all of them.
"""

from dataclasses import dataclass

import numpy as np

from . import mdp as m
from .errors import ModelError
from .seminorm import center, center_offset, span, span_dist, sup_dist

TOL = 1e-12


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: int
    worst: float  # largest observed lhs - rhs; <= TOL means pass

    @property
    def passed(self):
        return self.failures == 0


def random_vector(rng, d=None):
    d = int(rng.integers(1, 12)) if d is None else d
    return rng.normal(size=d) * rng.uniform(0.1, 10.0)


def random_mdp(rng, max_states=4, max_actions=3, dense=True):
    """Random MDP with rewards in [-1, 1].

    Dense Dirichlet rows make every row overlap, so the TV factor is < 1.
    """
    n_s = int(rng.integers(1, max_states + 1))
    n_a = int(rng.integers(1, max_actions + 1))
    conc = 1.0 if dense else 0.3
    p = rng.dirichlet(np.full(n_s, conc), size=(n_s, n_a))
    r = rng.uniform(-1.0, 1.0, size=(n_s, n_a))
    return m.TabularMdp(p, r)


def random_policy(rng, n_states, n_actions):
    return m.Policy(rng.dirichlet(np.ones(n_actions), size=n_states))


def random_q(rng, n):
    return rng.normal(size=n) * rng.uniform(0.1, 10.0)


def _suite(name, trials, rng, fn):
    worst = -np.inf
    failures = 0
    for _ in range(trials):
        slack = fn(rng)
        worst = max(worst, slack)
        failures += int(slack > TOL)
    return SuiteResult(name, trials, failures, float(worst))


def projection(rng):
    x = random_vector(rng)
    g = center_offset(x)
    s = span(x)
    exact = abs(np.max(np.abs(x - g)) - s)
    shift = rng.choice([-1.0, 1.0]) * rng.uniform(1e-6, 5.0)
    # moving the offset away from the midpoint costs exactly |shift|
    off = s + abs(shift) - np.max(np.abs(x - (g + shift)))
    return max(exact, off)


def centered_sandwich(rng):
    d = int(rng.integers(1, 12))
    x, y = center(random_vector(rng, d)), center(random_vector(rng, d))
    sp, sup = span_dist(x, y), sup_dist(x, y)
    return max(sp - sup, sup - 2 * sp)


def nonexpansive(rng):
    mdp = random_mdp(rng)
    q1, q2 = random_q(rng, mdp.n_pairs), random_q(rng, mdp.n_pairs)
    h1, h2 = m.bellman(mdp, q1), m.bellman(mdp, q2)
    return max(span(h1 - h2) - span(q1 - q2), sup_dist(h1, h2) - sup_dist(q1, q2))


def affine_growth(rng):
    mdp = random_mdp(rng)
    q = random_q(rng, mdp.n_pairs)
    return span(m.bellman(mdp, q)) - (span(q) + 1.0)


def beta_contraction(rng):
    mdp = random_mdp(rng)
    beta = m.tv_contraction_factor(mdp)
    q1, q2 = random_q(rng, mdp.n_pairs), random_q(rng, mdp.n_pairs)
    return span(m.bellman(mdp, q1) - m.bellman(mdp, q2)) - beta * span(q1 - q2)


def async_contraction(rng):
    mdp = random_mdp(rng)
    pol = random_policy(rng, mdp.n_states, mdp.n_actions)
    d = m.stationary_distribution(mdp, pol)
    beta_bar = m.async_contraction_factor(m.tv_contraction_factor(mdp), d.min())
    q1, q2 = random_q(rng, mdp.n_pairs), random_q(rng, mdp.n_pairs)
    lhs = span(m.async_bellman(mdp, q1, d) - m.async_bellman(mdp, q2, d))
    return lhs - beta_bar * span(q1 - q2)


def _random_triple(rng, mdp):
    return (int(rng.integers(mdp.n_states)), int(rng.integers(mdp.n_actions)),
            int(rng.integers(mdp.n_states)))


def f_lipschitz(rng):
    mdp = random_mdp(rng)
    d = rng.uniform(0.01, 1.0, size=mdp.n_pairs)
    y = _random_triple(rng, mdp)
    q1, q2 = random_q(rng, mdp.n_pairs), random_q(rng, mdp.n_pairs)
    lhs = span(m.random_operator(mdp, q1, d, y) - m.random_operator(mdp, q2, d, y))
    return lhs - 2.0 / d[mdp.pair(y[0], y[1])] * span(q1 - q2)


def f_growth(rng):
    mdp = random_mdp(rng)
    d = rng.uniform(0.01, 1.0, size=mdp.n_pairs)
    y = _random_triple(rng, mdp)
    q = random_q(rng, mdp.n_pairs)
    lhs = span(m.random_operator(mdp, q, d, y))
    return lhs - 2.0 / d[mdp.pair(y[0], y[1])] * (span(q) + 1.0)


def expected_random_operator(mdp, q, d):
    """``sum_y nu(y) F(Q, D, y)`` by enumerating every triple ``y``."""
    nu = m.triple_distribution(mdp, d)
    total = np.zeros(mdp.n_pairs)
    for s0 in range(mdp.n_states):
        for a0 in range(mdp.n_actions):
            for s1 in range(mdp.n_states):
                if nu[s0, a0, s1] > 0:
                    total += nu[s0, a0, s1] * m.random_operator(mdp, q, d, (s0, a0, s1))
    return total


def f_unbiased(rng):
    mdp = random_mdp(rng, dense=bool(rng.integers(2)))
    pol = random_policy(rng, mdp.n_states, mdp.n_actions)
    try:
        d = m.stationary_distribution(mdp, pol)
    except ModelError:
        return -np.inf
    q = random_q(rng, mdp.n_pairs)
    # compared at the 1e-10 level the exact identity is stated at
    err = np.max(np.abs(expected_random_operator(mdp, q, d) - m.bellman(mdp, q)))
    return err - 1e-10 + TOL


SUITES = {
    "projection identity": projection,
    "centered sandwich": centered_sandwich,
    "H non-expansive (span and sup)": nonexpansive,
    "H affine growth": affine_growth,
    "H beta-contraction": beta_contraction,
    "async H beta_bar-contraction": async_contraction,
    "F Lipschitz bound": f_lipschitz,
    "F growth bound": f_growth,
    "F unbiased (enumeration)": f_unbiased,
}


def run_all(trials=10_000, seed=0):
    rng = np.random.default_rng(seed)
    return [_suite(name, trials, rng, fn) for name, fn in SUITES.items()]

"""Exact fixed-point solvers used as ground truth for the learners."""

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from . import mdp as m
from .errors import ConvergenceError, ModelError, UsageError
from .seminorm import center, span

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 1_000_000
MAX_ENUMERATED_POLICIES = 2**20
DIVERGENCE_RUN = 10


@dataclass
class SolveReport:
    fixed_point: np.ndarray
    residual: float
    iterations: int
    gain: float | None = None

    def to_dict(self):
        return {
            "fixed_point": self.fixed_point.tolist(),
            "gain": self.gain,
            "residual": self.residual,
            "iterations": self.iterations,
        }


def seminorm_fixed_point(op, q0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Iterate ``Q <- center(op(Q))`` until ``span(op(Q) - Q) <= tol``.

    ``op`` must be a contraction in the span seminorm; the caller is
    responsible for certifying that.  Every iterate is centered so the
    sequence cannot drift along the all-ones direction.
    """
    if not tol > 0:
        raise UsageError(f"tol must be positive, got {tol}")
    q = center(q0)
    prev = np.inf
    rising = 0
    for it in range(max_iter + 1):
        tq = np.asarray(op(q), dtype=float)
        res = span(tq - q)
        if res <= tol:
            return SolveReport(fixed_point=q, residual=res, iterations=it)
        rising = rising + 1 if res > prev else 0
        if rising >= DIVERGENCE_RUN:
            raise ConvergenceError(
                f"residual grew for {DIVERGENCE_RUN} consecutive iterations "
                f"(now {res:.3e}); operator does not look span-contractive",
                residual=res,
                iterations=it,
            )
        prev = res
        q = center(tq)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations, residual {res:.3e}",
        residual=res,
        iterations=max_iter,
    )


def solve_bellman(mdp, q0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Centered relative Q-function and optimal gain ``r*``.

    ``H(Q) - Q`` is constant at the fixed point; the gain is the mean of its
    entries.
    """
    q0 = np.zeros(mdp.n_pairs) if q0 is None else q0
    rep = seminorm_fixed_point(lambda q: m.bellman(mdp, q), q0, tol, max_iter)
    diff = m.bellman(mdp, rep.fixed_point) - rep.fixed_point
    if np.ptp(diff) > 10 * tol:
        raise ConvergenceError(
            f"Bellman residual entries disagree by {np.ptp(diff):.3e}",
            residual=rep.residual,
            iterations=rep.iterations,
        )
    rep.gain = float(diff.mean())
    return rep


def solve_async_bellman(mdp, d, q0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Centered fixed point of the asynchronous operator for frequencies ``d``."""
    q0 = np.zeros(mdp.n_pairs) if q0 is None else q0
    return seminorm_fixed_point(lambda q: m.async_bellman(mdp, q, d), q0, tol, max_iter)


def greedy_policy(q, n_actions=None):
    """One-hot policy picking the lowest-index maximizer in every state."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        if n_actions is None:
            raise UsageError("flat Q needs n_actions")
        q = q.reshape(-1, n_actions)
    return m.Policy.deterministic(np.argmax(q, axis=1), q.shape[1])


def policy_average_reward(mdp, policy):
    """Long-run average reward ``sum_{s,a} mu(s) pi(a|s) R(s,a)``."""
    d = m.stationary_distribution(mdp, policy)
    return float(d @ mdp.reward.reshape(-1))


def enumerate_deterministic_gains(mdp):
    """Gain of every deterministic policy with an ergodic state chain.

    Returns ``[(actions_tuple, gain), ...]``; raises ``UsageError`` when the
    policy count exceeds ``MAX_ENUMERATED_POLICIES``.
    """
    count = mdp.n_actions**mdp.n_states
    if count > MAX_ENUMERATED_POLICIES:
        raise UsageError(f"{count} deterministic policies; enumeration is capped")
    out = []
    for actions in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        pol = m.Policy.deterministic(actions, mdp.n_actions)
        try:
            out.append((actions, policy_average_reward(mdp, pol)))
        except ModelError:
            continue
    return out


def discounted_value_iteration(mdp, gamma, tol=1e-10, max_iter=DEFAULT_MAX_ITER, q0=None):
    """Optimal discounted Q-function, iterated until ``||H_g(Q) - Q||_inf <= tol``."""
    if not 0 < gamma < 1:
        raise UsageError(f"gamma must lie in (0, 1), got {gamma}")
    q = np.zeros(mdp.n_pairs) if q0 is None else np.asarray(q0, dtype=float).reshape(-1)
    for it in range(max_iter + 1):
        tq = m.discounted_bellman(mdp, q, gamma)
        res = float(np.max(np.abs(tq - q)))
        if res <= tol:
            log.debug(
                "value iteration: %d iterations, residual %.3e, "
                "||Q - Q*||_inf <= %.3e",
                it, res, gamma * res / (1 - gamma),
            )
            return tq
        q = tq
    raise ConvergenceError(
        f"value iteration did not reach {tol} in {max_iter} iterations (residual {res:.3e})",
        residual=res,
        iterations=max_iter,
    )

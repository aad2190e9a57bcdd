"""Tabular MDP model, Bellman-type operators and behavior-chain analysis.

Q-tables are flat float arrays of length ``n_states * n_actions`` indexed
state-major: pair ``(s, a)`` lives at ``s * n_actions + a``.  Operators also
accept the ``(n_states, n_actions)`` view and always return the flat form.
"""

import json
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np

from .errors import ModelError, UsageError

ROW_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP ``(S, A, P, R)``.

    ``transition[s, a, s2]`` is ``p(s2 | s, a)`` and ``reward[s, a]`` is
    ``R(s, a)``.  Arrays are copied and frozen on construction.
    """

    transition: np.ndarray
    reward: np.ndarray
    name: str = ""

    def __post_init__(self):
        p = _frozen(self.transition)
        r = _frozen(self.reward)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ModelError(f"transition must have shape (S, A, S), got {p.shape}")
        n_s, n_a, _ = p.shape
        if n_s < 1 or n_a < 1:
            raise ModelError("need at least one state and one action")
        if r.shape != (n_s, n_a):
            raise ModelError(f"reward must have shape {(n_s, n_a)}, got {r.shape}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r))):
            raise ModelError("transition and reward entries must be finite")
        if np.any(p < 0) or np.any(p > 1):
            raise ModelError("transition probabilities must lie in [0, 1]")
        bad = np.abs(p.sum(axis=2) - 1.0) > ROW_TOL
        if np.any(bad):
            s, a = np.argwhere(bad)[0]
            raise ModelError(f"p(.|s={s}, a={a}) sums to {p[s, a].sum()!r}, not 1")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def n_pairs(self):
        return self.n_states * self.n_actions

    @property
    def rewards_bounded(self):
        """True when every reward lies in [-1, 1]."""
        return bool(np.all(np.abs(self.reward) <= 1.0))

    def pair(self, s, a):
        return s * self.n_actions + a

    def q_view(self, q):
        q = np.asarray(q, dtype=float)
        if q.size != self.n_pairs:
            raise UsageError(f"Q has {q.size} entries, MDP has {self.n_pairs} pairs")
        return q.reshape(self.n_states, self.n_actions)

    def to_dict(self):
        d = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            n_s, n_a = int(d["n_states"]), int(d["n_actions"])
            p = np.asarray(d["transition"], dtype=float)
            r = np.asarray(d["reward"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed MDP definition: {exc}") from exc
        if p.shape != (n_s, n_a, n_s) or r.shape != (n_s, n_a):
            raise ModelError(
                f"declared sizes ({n_s}, {n_a}) do not match arrays {p.shape}, {r.shape}"
            )
        return cls(p, r, name=str(d.get("name", "")))


def load_mdp(path):
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read MDP file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON: {exc}") from exc
    return TabularMdp.from_dict(data)


def save_mdp(mdp, path):
    with open(path, "w") as fh:
        json.dump(mdp.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary randomized policy; ``probs[s, a] = pi(a | s)``.

    Behavior policies must have full support (see ``require_full_support``);
    greedy policies are stored as one-hot rows.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ModelError(f"policy must have shape (S, A), got {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ModelError("policy probabilities must be finite and nonnegative")
        bad = np.abs(p.sum(axis=1) - 1.0) > ROW_TOL
        if np.any(bad):
            s = int(np.argmax(bad))
            raise ModelError(f"pi(.|s={s}) sums to {p[s].sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def full_support(self):
        return bool(np.all(self.probs > 0))

    def actions(self):
        """Per-state action with the largest probability (the action itself for one-hot rows)."""
        return np.argmax(self.probs, axis=1)

    def require_full_support(self):
        if not self.full_support:
            s, a = np.argwhere(self.probs <= 0)[0]
            raise ModelError(f"behavior policy needs pi(a|s) > 0; pi({a}|{s}) = 0")

    def check_compatible(self, mdp):
        if self.probs.shape != (mdp.n_states, mdp.n_actions):
            raise UsageError(
                f"policy shape {self.probs.shape} does not match MDP "
                f"({mdp.n_states}, {mdp.n_actions})"
            )


BehaviorPolicy = Policy


# --- Bellman-type operators -------------------------------------------------


def bellman(mdp, q):
    """``H(Q)(s,a) = R(s,a) + sum_s2 p(s2|s,a) max_a2 Q(s2,a2)``."""
    v = mdp.q_view(q).max(axis=1)
    return (mdp.reward + mdp.transition @ v).reshape(-1)


def discounted_bellman(mdp, q, gamma):
    v = mdp.q_view(q).max(axis=1)
    return (mdp.reward + gamma * (mdp.transition @ v)).reshape(-1)


def _check_freq(mdp, d):
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.size != mdp.n_pairs:
        raise UsageError(f"frequency vector has {d.size} entries, expected {mdp.n_pairs}")
    if np.any(~(d > 0)):
        raise UsageError("frequency entries must be strictly positive")
    return d


def async_bellman(mdp, q, d):
    """Expected asynchronous update ``(I - D) Q + D H(Q)`` for visit frequencies ``d``."""
    d = _check_freq(mdp, d)
    if np.any(d > 1):
        raise UsageError("frequency entries must lie in (0, 1]")
    q = np.asarray(q, dtype=float).reshape(-1)
    return (1.0 - d) * q + d * bellman(mdp, q)


def random_operator(mdp, q, d, triple):
    """Importance-weighted one-sample operator.

    Only entry ``(s0, a0)`` moves, by the temporal difference of the triple
    divided by ``d[(s0, a0)]``.  With ``d`` all ones this is the plain sampled
    Q-learning target.
    """
    d = _check_freq(mdp, d)
    s0, a0, s1 = _check_triple(mdp, triple)
    q = np.asarray(q, dtype=float).reshape(-1)
    out = q.copy()
    i = mdp.pair(s0, a0)
    out[i] += temporal_difference(mdp, q, (s0, a0, s1)) / d[i]
    return out


def operator_g(mdp, q, triple):
    return random_operator(mdp, q, np.ones(mdp.n_pairs), triple)


def _check_triple(mdp, triple):
    try:
        s0, a0, s1 = (int(v) for v in triple)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"transition triple must be (s0, a0, s1), got {triple!r}") from exc
    if not (0 <= s0 < mdp.n_states and 0 <= a0 < mdp.n_actions and 0 <= s1 < mdp.n_states):
        raise UsageError(f"transition triple {triple!r} out of range")
    return s0, a0, s1


def temporal_difference(mdp, q, triple):
    """``R(s0,a0) + max_a Q(s1,a) - Q(s0,a0)``."""
    s0, a0, s1 = triple
    qv = mdp.q_view(q)
    return float(mdp.reward[s0, a0] + qv[s1].max() - qv[s0, a0])


def tv_contraction_factor(mdp):
    """Largest total-variation distance between any two rows ``p(.|s,a)``.

    Uses ``TV(p, q) = 1 - sum(min(p, q))``, equal to ``sum|p - q| / 2`` for
    distributions but free of the cancellation in ``|p - q|``: the example
    MDP's 0.6 comes out as the double nearest 0.6.
    """
    rows = mdp.transition.reshape(mdp.n_pairs, mdp.n_states)
    overlap = np.minimum(rows[:, None, :], rows[None, :, :]).sum(axis=2)
    return float(np.clip(1.0 - overlap, 0.0, 1.0).max())


def async_contraction_factor(beta, d_min):
    return 1.0 - (1.0 - beta) * d_min


# --- Markov chains ----------------------------------------------------------


def state_chain(mdp, policy):
    """State transition matrix ``P_pi(s, s2) = sum_a pi(a|s) p(s2|s,a)``."""
    policy.check_compatible(mdp)
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def state_action_chain(mdp, policy):
    """Pair transition matrix ``P((s,a), (s2,a2)) = p(s2|s,a) pi(a2|s2)``."""
    policy.check_compatible(mdp)
    p = np.einsum("sat,tb->satb", mdp.transition, policy.probs)
    return p.reshape(mdp.n_pairs, mdp.n_pairs)


def _reachable(adj, start):
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj[u] & ~seen):
            seen[v] = True
            stack.append(v)
    return seen


def chain_period(chain):
    """Period of an irreducible chain: gcd of ``level(u) + 1 - level(v)`` over edges."""
    adj = np.asarray(chain) > 0
    n = adj.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    order = [0]
    for u in order:
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                order.append(v)
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        g = gcd(g, int(abs(level[u] + 1 - level[v])))
    return g


def check_ergodic(chain):
    """Raise ``ModelError`` unless ``chain`` is irreducible and aperiodic."""
    adj = np.asarray(chain) > 0
    fwd = _reachable(adj, 0)
    bwd = _reachable(adj.T, 0)
    if not (fwd.all() and bwd.all()):
        cut = np.flatnonzero(~(fwd & bwd))
        raise ModelError(
            f"chain is reducible: states {cut.tolist()} do not communicate with state 0"
        )
    period = chain_period(chain)
    if period != 1:
        raise ModelError(f"chain is periodic with period {period}")


def chain_stationary(chain):
    """Stationary distribution by a direct solve of ``mu P = mu, sum(mu) = 1``."""
    p = np.asarray(chain, dtype=float)
    check_ergodic(p)
    n = p.shape[0]
    a = p.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    mu = np.linalg.solve(a, b)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def power_stationary(chain, tol=1e-14, max_iter=1_000_000):
    """Stationary distribution by power iteration from the uniform start."""
    p = np.asarray(chain, dtype=float)
    mu = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        nxt = mu @ p
        if np.max(np.abs(nxt - mu)) <= tol:
            return nxt
        mu = nxt
    raise ModelError("power iteration did not settle; chain may be periodic or reducible")


def stationary_state_distribution(mdp, policy):
    return chain_stationary(state_chain(mdp, policy))


def stationary_distribution(mdp, policy):
    """Stationary pair frequencies ``D(s,a) = mu(s) pi(a|s)``, flattened.

    Ergodicity is checked on the induced state chain.
    """
    mu = stationary_state_distribution(mdp, policy)
    return (mu[:, None] * policy.probs).reshape(-1)


def triple_distribution(mdp, d):
    """Stationary law of ``(S_k, A_k, S_{k+1})``: ``nu[s,a,s2] = D(s,a) p(s2|s,a)``."""
    d = np.asarray(d, dtype=float).reshape(mdp.n_states, mdp.n_actions)
    return d[:, :, None] * mdp.transition

"""Single-trajectory tabular Q-learning with adaptive or universal stepsizes.

Supported variants:

``adaptive_set``
    stepsize ``alpha / (N_k(s,a) + h)``, no shift.
``adaptive_centered``
    same stepsize, iterate re-centered after every update.
``generic``
    same stepsize, then ``Q += c_k e`` with ``c_k = kernel_shift(Q_tilde)``.
``universal``
    stepsize ``alpha / (k + h)`` for whichever pair is visited.
``discounted``
    discounted TD target ``R + gamma max Q(s', .)`` with either schedule.

``Learner.step`` is the readable reference implementation.  ``Learner.run``
drives the same recursion through a compiled kernel for the built-in
variants; both consume the random stream identically, two uniforms per step.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .errors import BoundViolation, UsageError
from .seminorm import center_offset, span

VARIANTS = ("adaptive_set", "adaptive_centered", "generic", "universal", "discounted")
ADAPTIVE_VARIANTS = ("adaptive_set", "adaptive_centered", "generic")
SCHEDULES = ("adaptive", "universal")
BOUND_SLACK = 1e-12
BLOCK = 1 << 16


def make_rng(seed, *keys):
    """PCG64 generator; distinct ``(seed, *keys)`` tuples give independent streams."""
    if not keys:
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))


def geometric_grid(horizon, ratio_num=5, ratio_den=4):
    """Sorted unique ``ceil((num/den)**j)`` up to ``horizon``, plus ``horizon`` itself.

    Integer arithmetic keeps the grid identical on every platform.
    """
    if horizon < 1:
        raise UsageError(f"horizon must be >= 1, got {horizon}")
    ks = set()
    j = 0
    while True:
        k = -(-(ratio_num**j) // (ratio_den**j))
        if k > horizon:
            break
        ks.add(k)
        j += 1
    ks.add(horizon)
    return np.array(sorted(ks), dtype=np.int64)


def log_growth_bound(k, alpha, h, n_pairs):
    """``alpha |S||A| log((ceil((k-1)/|S||A|) + h) / h)``: a.s. envelope on ``span(Q_k)``."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    m_k = -(-(k - 1) // n_pairs)
    return alpha * n_pairs * math.log((m_k + h) / h)


def inverse_cdf(probs, u):
    """First index whose cumulative probability strictly exceeds ``u``."""
    c = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p > 0:
            last = i
        c += p
        if u < c:
            return i
    return last


def sample_step(mdp, policy, s, rng):
    """Draw ``(a, s_next, r)`` from state ``s`` using two uniforms."""
    u = rng.random(2)
    a = inverse_cdf(policy.probs[s], u[0])
    s2 = inverse_cdf(mdp.transition[s, a], u[1])
    return a, s2, float(mdp.reward[s, a])


class VisitState:
    """Visit counters ``N_k(s,a)`` and the empirical frequencies derived from them."""

    def __init__(self, n_pairs, h):
        self.counts = np.zeros(n_pairs, dtype=np.int64)
        self.k = 0
        self.h = float(h)

    def record(self, pair):
        self.counts[pair] += 1
        self.k += 1
        return int(self.counts[pair])

    def frequencies(self):
        """``D_k(s,a) = (N_k(s,a) + h) / (k + h)``."""
        return (self.counts + self.h) / (self.k + self.h)


@dataclass
class LearnerConfig:
    variant: str = "adaptive_set"
    alpha: float = 2.0
    h: float | None = None
    q1: np.ndarray | None = None
    horizon: int = 100_000
    bound_check: bool = False
    gamma: float | None = None
    schedule: str = "adaptive"
    initial_state: int = 0
    kernel_shift: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UsageError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not self.alpha > 0:
            raise UsageError(f"alpha must be positive, got {self.alpha}")
        if self.h is None:
            self.h = max(1.0, float(self.alpha))
        if not self.h > 0 or not self.h > self.alpha - 1:
            raise UsageError(
                f"need h > 0 and h > alpha - 1 for stepsizes in (0, 1); "
                f"got alpha={self.alpha}, h={self.h}"
            )
        if self.horizon < 1:
            raise UsageError(f"horizon must be >= 1, got {self.horizon}")
        if self.variant == "discounted":
            if self.gamma is None or not 0 < self.gamma < 1:
                raise UsageError(f"discounted variant needs gamma in (0, 1), got {self.gamma}")
            if self.schedule not in SCHEDULES:
                raise UsageError(f"schedule must be one of {SCHEDULES}")
            if self.bound_check:
                raise UsageError("the growth bound applies to undiscounted adaptive variants only")
        if self.variant == "universal" and self.bound_check:
            raise UsageError("the growth bound applies to adaptive variants only")
        if self.variant == "generic" and self.kernel_shift is None:
            raise UsageError("generic variant needs a kernel_shift callback")

    @property
    def adaptive(self):
        if self.variant == "discounted":
            return self.schedule == "adaptive"
        return self.variant != "universal"

    @property
    def discount(self):
        return self.gamma if self.variant == "discounted" else 1.0


def zero_shift(q_tilde):
    """Kernel shift reproducing the plain (unshifted) adaptive update."""
    return 0.0


def centering_shift(q_tilde):
    """Kernel shift reproducing the centered update."""
    return -center_offset(q_tilde)


@dataclass
class RunLog:
    """Iterates captured at checkpoint steps ``ks`` (row ``i`` holds ``Q_{ks[i]}``)."""

    ks: np.ndarray
    q: np.ndarray
    span_q: np.ndarray
    stepsize: np.ndarray
    bound: np.ndarray


class Learner:
    def __init__(self, mdp, policy, config, rng):
        policy.check_compatible(mdp)
        policy.require_full_support()
        if not 0 <= config.initial_state < mdp.n_states:
            raise UsageError(f"initial state {config.initial_state} out of range")
        self.mdp = mdp
        self.policy = policy
        self.config = config
        self.rng = rng
        q1 = np.zeros(mdp.n_pairs) if config.q1 is None else config.q1
        self.q = np.array(q1, dtype=float).reshape(-1)
        if self.q.size != mdp.n_pairs or not np.all(np.isfinite(self.q)):
            raise UsageError("Q1 must be a finite vector with one entry per pair")
        self.span_q1 = span(self.q)
        self.visits = VisitState(mdp.n_pairs, config.h)
        self.state = int(config.initial_state)
        self.last_stepsize = 0.0
        self._pi_rows = policy.probs.tolist()
        self._p_rows = mdp.transition.tolist()
        self._r_rows = mdp.reward.tolist()

    @property
    def k(self):
        """Index of the current iterate: ``self.q`` is ``Q_k``."""
        return self.visits.k + 1

    def bound(self, k=None):
        k = self.k if k is None else k
        c = self.config
        return log_growth_bound(k, c.alpha, c.h, self.mdp.n_pairs) + self.span_q1

    def _check_bound(self):
        sq = (self.q.max() - self.q.min()) / 2.0
        b = self.bound()
        if sq > b + BOUND_SLACK:
            raise BoundViolation(self.k, sq, b)

    def step(self, u=None):
        """Advance from ``Q_k`` to ``Q_{k+1}``; returns the applied stepsize.

        ``u`` optionally supplies the step's two uniforms, already drawn from
        ``self.rng``.
        """
        c = self.config
        s = self.state
        u0, u1 = self.rng.random(2) if u is None else u
        a = inverse_cdf(self._pi_rows[s], u0)
        s2 = inverse_cdf(self._p_rows[s][a], u1)
        r = self._r_rows[s][a]
        i = self.mdp.pair(s, a)
        q = self.q
        qv = q.reshape(self.mdp.n_states, self.mdp.n_actions)
        delta = r + c.discount * qv[s2].max() - q[i]
        n = self.visits.record(i)
        k = self.visits.k
        lr = c.alpha / ((n if c.adaptive else k) + c.h)
        q[i] += lr * delta
        if c.variant == "adaptive_centered":
            q -= center_offset(q)
        elif c.variant == "generic":
            q += float(c.kernel_shift(q.copy()))
        self.state = s2
        self.last_stepsize = lr
        if c.bound_check:
            self._check_bound()
        return lr

    def run(self, horizon=None, checkpoints=None):
        """Advance until the iterate index reaches ``horizon``, logging at ``checkpoints``."""
        c = self.config
        horizon = c.horizon if horizon is None else horizon
        ks = geometric_grid(horizon) if checkpoints is None else np.asarray(checkpoints, np.int64)
        if ks.size and (ks[0] < self.k or ks[-1] > horizon or np.any(np.diff(ks) <= 0)):
            raise UsageError("checkpoints must be strictly increasing within [k, horizon]")
        n_ck = ks.size
        log = RunLog(
            ks=ks,
            q=np.empty((n_ck, self.mdp.n_pairs)),
            span_q=np.empty(n_ck),
            stepsize=np.empty(n_ck),
            bound=np.array([self.bound(int(k)) for k in ks]) if c.variant != "discounted"
            else np.full(n_ck, np.nan),
        )
        if c.bound_check and self.k == 1:
            self._check_bound()
        if c.variant == "generic":
            self._run_python(horizon, log)
        else:
            self._run_compiled(horizon, log)
        return log

    def _record(self, log, j):
        log.q[j] = self.q
        log.span_q[j] = span(self.q)
        log.stepsize[j] = self.last_stepsize

    def _run_python(self, horizon, log):
        j = 0
        u = np.empty((0, 2))
        t = 0
        while True:
            while j < log.ks.size and log.ks[j] == self.k:
                self._record(log, j)
                j += 1
            if self.k >= horizon:
                break
            if t == len(u):
                u = self.rng.random((min(BLOCK, horizon - self.k), 2)).tolist()
                t = 0
            self.step(u[t])
            t += 1

    def _run_compiled(self, horizon, log):
        c = self.config
        mdp = self.mdp
        if horizon < self.k:
            raise UsageError(f"horizon {horizon} is behind the current step {self.k}")
        p = np.ascontiguousarray(mdp.transition)
        pi = np.ascontiguousarray(self.policy.probs)
        rew = np.ascontiguousarray(mdp.reward)
        centered = c.variant == "adaptive_centered"
        j = 0
        while True:
            n = min(BLOCK, horizon - self.k)
            u = self.rng.random((n, 2)) if n > 0 else np.empty((0, 2))
            out = _learn_kernel(
                p, pi, rew, self.q, self.visits.counts, self.state, self.k, u,
                float(c.alpha), float(c.h), c.adaptive, centered, float(c.discount),
                log.ks, j, log.q, log.span_q, log.stepsize, self.last_stepsize,
                c.bound_check, self.span_q1,
            )
            self.state, steps_done, j, self.last_stepsize, viol_k, viol_span = out
            self.visits.k += steps_done
            if viol_k > 0:
                raise BoundViolation(int(viol_k), float(viol_span), self.bound(int(viol_k)))
            if n == 0 or self.k >= horizon:
                break


@numba.njit(cache=True)
def _pick(probs, u):
    c = 0.0
    last = 0
    for i in range(probs.shape[0]):
        if probs[i] > 0:
            last = i
        c += probs[i]
        if u < c:
            return i
    return last


@numba.njit(cache=True)
def _span(q):
    lo = q[0]
    hi = q[0]
    for i in range(1, q.shape[0]):
        if q[i] < lo:
            lo = q[i]
        if q[i] > hi:
            hi = q[i]
    return (hi - lo) / 2.0


@numba.njit(cache=True)
def _bound(k, alpha, h, n_pairs):
    m_k = (k - 1 + n_pairs - 1) // n_pairs
    return alpha * n_pairs * np.log((m_k + h) / h)


@numba.njit(cache=True)
def _learn_kernel(p, pi, rew, q, counts, s, k0, u, alpha, h, adaptive, centered,
                  gamma, ks, j, out_q, out_span, out_lr, last_lr, bound_check, span_q1):
    n_a = pi.shape[1]
    n_pairs = q.shape[0]
    n_ck = ks.shape[0]
    k = k0
    n = u.shape[0]
    for t in range(n + 1):
        while j < n_ck and ks[j] == k:
            out_q[j, :] = q
            out_span[j] = _span(q)
            out_lr[j] = last_lr
            j += 1
        if t == n:
            break
        a = _pick(pi[s], u[t, 0])
        s2 = _pick(p[s, a], u[t, 1])
        i = s * n_a + a
        best = q[s2 * n_a]
        for b in range(1, n_a):
            if q[s2 * n_a + b] > best:
                best = q[s2 * n_a + b]
        delta = rew[s, a] + gamma * best - q[i]
        counts[i] += 1
        if adaptive:
            lr = alpha / (counts[i] + h)
        else:
            lr = alpha / (k + h)
        q[i] += lr * delta
        if centered:
            lo = q[0]
            hi = q[0]
            for r in range(1, n_pairs):
                if q[r] < lo:
                    lo = q[r]
                if q[r] > hi:
                    hi = q[r]
            g = (hi + lo) / 2.0
            for r in range(n_pairs):
                q[r] -= g
        s = s2
        last_lr = lr
        k += 1
        if bound_check:
            sq = _span(q)
            if sq > _bound(k, alpha, h, n_pairs) + span_q1 + 1e-12:
                return s, t + 1, j, last_lr, k, sq
    return s, n, j, last_lr, 0, 0.0


def rollout_rewards(mdp, policy, horizon, rng, initial_state=0, checkpoints=None):
    """Running average ``(1/k) sum_{i<=k} R(S_i, A_i)`` of one trajectory at ``checkpoints``."""
    policy.check_compatible(mdp)
    ks = geometric_grid(horizon) if checkpoints is None else np.asarray(checkpoints, np.int64)
    out = np.empty(ks.size)
    total = 0.0
    s = int(initial_state)
    k = 0
    j = 0
    p = np.ascontiguousarray(mdp.transition)
    pi = np.ascontiguousarray(policy.probs)
    rew = np.ascontiguousarray(mdp.reward)
    while k < horizon:
        n = min(BLOCK, horizon - k)
        u = rng.random((n, 2))
        s, total, j = _rollout_kernel(p, pi, rew, s, k, total, u, ks, j, out)
        k += n
    return out


@numba.njit(cache=True)
def _rollout_kernel(p, pi, rew, s, k0, total, u, ks, j, out):
    for t in range(u.shape[0]):
        a = _pick(pi[s], u[t, 0])
        total += rew[s, a]
        s = _pick(p[s, a], u[t, 1])
        k = k0 + t + 1
        while j < ks.shape[0] and ks[j] == k:
            out[j] = total / k
            j += 1
    return s, total, j

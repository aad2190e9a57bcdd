"""Replicated learning experiments, reference targets and plot-ready output."""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import mdp as m
from . import solvers
from .errors import RateFitError, UsageError
from .learner import Learner, LearnerConfig, geometric_grid, make_rng, rollout_rewards

APPENDIX_C = "appendix_c"
APPENDIX_C_BEHAVIOR = [[0.2, 0.8], [0.8, 0.2]]

# name -> (learner variant, schedule)
EXPERIMENT_VARIANTS = {
    "adaptive_set": ("adaptive_set", "adaptive"),
    "adaptive_centered": ("adaptive_centered", "adaptive"),
    "universal": ("universal", "universal"),
    "discounted_adaptive": ("discounted", "adaptive"),
    "discounted_universal": ("discounted", "universal"),
}

AVERAGE_METRICS = (
    "span_err_sq_qstar",
    "span_err_sq_qbar",
    "sup_err_sq_qtilde",
    "span_q",
    "b_k",
    "stepsize",
)
DISCOUNTED_METRICS = ("sup_err_qgamma", "rel_sup_err_qgamma", "stepsize")

# extra seed key separating rollout streams from learner streams
ROLLOUT_STREAM = 1


def build_appendix_c():
    """The two-state, two-action example MDP and its behavior policy."""
    text = resources.files("avgq").joinpath("data/appendix_c.json").read_text()
    mdp = m.TabularMdp.from_dict(json.loads(text))
    return mdp, m.Policy(np.array(APPENDIX_C_BEHAVIOR))


def resolve_mdp(source, behavior=None):
    """Load a bundled (``"appendix_c"``) or file-backed MDP plus its behavior policy.

    File MDPs default to the uniform behavior policy.
    """
    if source == APPENDIX_C:
        mdp, pol = build_appendix_c()
    else:
        mdp = m.load_mdp(source)
        pol = m.Policy.uniform(mdp.n_states, mdp.n_actions)
    if behavior is not None:
        pol = m.Policy(np.asarray(behavior, dtype=float))
    pol.check_compatible(mdp)
    pol.require_full_support()
    return mdp, pol


@dataclass
class ExperimentConfig:
    mdp: str = APPENDIX_C
    behavior: list | None = None
    variants: list = field(default_factory=lambda: ["adaptive_set", "universal"])
    alpha: float = 10.0
    h: float = 10.0
    gamma: float | None = None
    horizon: int = 100_000
    replications: int = 100
    base_seed: int = 0
    initial_state: int = 0
    bound_check: bool = False
    workers: int = 1
    csv: str | None = None
    json: str | None = None

    def __post_init__(self):
        if not self.variants:
            raise UsageError("variant list is empty")
        for v in self.variants:
            if v not in EXPERIMENT_VARIANTS:
                raise UsageError(
                    f"unknown variant {v!r}; choose from {sorted(EXPERIMENT_VARIANTS)}"
                )
        if any(v.startswith("discounted") for v in self.variants):
            if self.gamma is None or not 0 < self.gamma < 1:
                raise UsageError("discounted variants need gamma in (0, 1)")
        if self.replications < 1:
            raise UsageError(f"replications must be >= 1, got {self.replications}")
        if self.horizon < 1:
            raise UsageError(f"horizon must be >= 1, got {self.horizon}")
        if self.workers < 1:
            raise UsageError(f"workers must be >= 1, got {self.workers}")
        for v in self.variants:
            self.learner_config(v)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise UsageError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise UsageError(f"config {path} must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self):
        return asdict(self)

    def learner_config(self, name):
        variant, schedule = EXPERIMENT_VARIANTS[name]
        return LearnerConfig(
            variant=variant,
            alpha=self.alpha,
            h=self.h,
            horizon=self.horizon,
            bound_check=self.bound_check and variant != "discounted" and schedule == "adaptive",
            gamma=self.gamma if variant == "discounted" else None,
            schedule=schedule,
            initial_state=self.initial_state,
        )

    def header(self):
        """Run parameters that do not affect results are left out."""
        d = self.to_dict()
        for k in ("workers", "csv", "json"):
            d.pop(k)
        return d


@dataclass
class Targets:
    q_star: np.ndarray | None = None
    q_bar: np.ndarray | None = None
    q_gamma: np.ndarray | None = None
    gain: float | None = None
    beta: float | None = None
    d: np.ndarray | None = None


def compute_targets(mdp, policy, config):
    t = Targets(beta=m.tv_contraction_factor(mdp))
    if any(not v.startswith("discounted") for v in config.variants):
        rep = solvers.solve_bellman(mdp)
        t.q_star, t.gain = rep.fixed_point, rep.gain
        t.d = m.stationary_distribution(mdp, policy)
        t.q_bar = solvers.solve_async_bellman(mdp, t.d).fixed_point
    if any(v.startswith("discounted") for v in config.variants):
        t.q_gamma = solvers.discounted_value_iteration(mdp, config.gamma)
    return t


def _span_rows(x):
    return (x.max(axis=1) - x.min(axis=1)) / 2.0


def checkpoint_metrics(log, targets, discounted):
    """Per-checkpoint metric rows for one run, columns ordered as the metric tuple."""
    q = log.q
    if discounted:
        err = np.max(np.abs(q - targets.q_gamma), axis=1)
        scale = np.max(np.abs(targets.q_gamma))
        return np.column_stack([err, err / scale, log.stepsize])
    tilde = targets.q_star - (targets.q_star.max() + targets.q_star.min()) / 2.0
    return np.column_stack([
        _span_rows(q - targets.q_star) ** 2,
        _span_rows(q - targets.q_bar) ** 2,
        np.max(np.abs(q - tilde), axis=1) ** 2,
        log.span_q,
        log.bound,
        log.stepsize,
    ])


def _replicate(args):
    mdp, policy, lcfg, base_seed, rep, ks, targets = args
    learner = Learner(mdp, policy, lcfg, make_rng(base_seed, rep))
    log = learner.run(checkpoints=ks)
    return checkpoint_metrics(log, targets, lcfg.variant == "discounted"), learner.q.copy()


@dataclass
class MetricSeries:
    """Mean and standard error of every logged metric, per variant, on a shared grid."""

    ks: np.ndarray
    replications: int
    mean: dict
    stderr: dict
    final_q: dict = field(default_factory=dict)
    header: dict = field(default_factory=dict)

    def metric(self, variant, name):
        return self.mean[variant][name]

    def to_dict(self):
        return {
            "header": self.header,
            "replications": self.replications,
            "ks": self.ks.tolist(),
            "mean": {v: {k: a.tolist() for k, a in d.items()} for v, d in self.mean.items()},
            "stderr": {v: {k: a.tolist() for k, a in d.items()} for v, d in self.stderr.items()},
            "final_q": {v: a.tolist() for v, a in self.final_q.items()},
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda x: np.asarray(x, dtype=float)  # noqa: E731
        return cls(
            ks=np.asarray(d["ks"], dtype=np.int64),
            replications=int(d["replications"]),
            mean={v: {k: arr(a) for k, a in dd.items()} for v, dd in d["mean"].items()},
            stderr={v: {k: arr(a) for k, a in dd.items()} for v, dd in d["stderr"].items()},
            final_q={v: arr(a) for v, a in d.get("final_q", {}).items()},
            header=d.get("header", {}),
        )


def aggregate(rows):
    """Mean and standard error across replications (axis 0), in replication order."""
    rows = np.asarray(rows)
    mean = rows.mean(axis=0)
    if rows.shape[0] > 1:
        stderr = rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr


def run_experiment(config, targets=None):
    """Run every variant for ``config.replications`` seeded replications.

    Replication ``r`` of every variant uses the stream ``(base_seed, r)``, so
    variants are compared on common random numbers.  Results are reduced in
    replication order and do not depend on ``config.workers``.
    """
    mdp, policy = resolve_mdp(config.mdp, config.behavior)
    if targets is None:
        targets = compute_targets(mdp, policy, config)
    ks = geometric_grid(config.horizon)
    series = MetricSeries(ks=ks, replications=config.replications, mean={}, stderr={},
                          header=config.header())
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for name in config.variants:
            lcfg = config.learner_config(name)
            jobs = [(mdp, policy, lcfg, config.base_seed, r, ks, targets)
                    for r in range(config.replications)]
            results = list(pool.map(_replicate, jobs)) if pool else [_replicate(j) for j in jobs]
            rows = np.stack([r[0] for r in results])
            if not np.all(np.isfinite(rows)):
                raise FloatingPointError(f"non-finite metric in variant {name}")
            metrics = DISCOUNTED_METRICS if lcfg.variant == "discounted" else AVERAGE_METRICS
            mean, se = aggregate(rows)
            series.mean[name] = {k: mean[:, i] for i, k in enumerate(metrics)}
            series.stderr[name] = {k: se[:, i] for i, k in enumerate(metrics)}
            series.final_q[name] = np.stack([r[1] for r in results])
    finally:
        if pool:
            pool.shutdown()
    return series


def policy_rollout(mdp, policy, horizon, replications, base_seed=0, initial_state=0,
                   checkpoints=None):
    """Mean running-average reward across independent trajectories of ``policy``."""
    ks = geometric_grid(horizon) if checkpoints is None else np.asarray(checkpoints, np.int64)
    runs = [rollout_rewards(mdp, policy, horizon, make_rng(base_seed, r, ROLLOUT_STREAM),
                            initial_state, ks)
            for r in range(replications)]
    return ks, np.mean(runs, axis=0)


def fit_rate(series, variant, metric="span_err_sq_qstar", window=0.2, k_min=None):
    """Least-squares slope of ``log(mean metric)`` against ``log(k)``.

    The fit uses checkpoints with ``k >= k_min`` when given, otherwise the
    final ``window`` fraction of checkpoints.
    """
    ks = np.asarray(series.ks, dtype=float)
    y = np.asarray(series.metric(variant, metric), dtype=float)
    if k_min is not None:
        sel = ks >= k_min
    else:
        if not 0 < window <= 1:
            raise RateFitError(f"window must lie in (0, 1], got {window}")
        sel = np.arange(ks.size) >= ks.size - math.ceil(window * ks.size)
    if sel.sum() < 10:
        raise RateFitError(f"only {int(sel.sum())} checkpoints in the fit window; need 10")
    if np.any(~(y[sel] > 0)):
        raise RateFitError("nonpositive values in the fit window; the metric did not converge")
    slope, _ = np.polyfit(np.log(ks[sel]), np.log(y[sel]), 1)
    return float(slope)


def _fmt(x):
    return repr(float(x))


def write_csv(series, fh):
    fh.write("# " + json.dumps(series.header, sort_keys=True) + "\n")
    fh.write("variant,k,metric,mean,stderr\n")
    for v in series.mean:
        for name in series.mean[v]:
            mu, se = series.mean[v][name], series.stderr[v][name]
            for i, k in enumerate(series.ks):
                fh.write(f"{v},{int(k)},{name},{_fmt(mu[i])},{_fmt(se[i])}\n")


def emit(series, fmt, path):
    """Write ``series`` as CSV (``variant,k,metric,mean,stderr``) or JSON.

    CSV starts with one ``#`` comment line holding the run parameters.
    """
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown output format {fmt!r}")
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            if fmt == "csv":
                write_csv(series, fh)
            else:
                json.dump(series.to_dict(), fh, sort_keys=True)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def load_series(path):
    with open(path) as fh:
        return MetricSeries.from_dict(json.load(fh))

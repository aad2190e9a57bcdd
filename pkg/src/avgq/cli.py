"""Command-line entry point: ``avgq {solve,learn,appendix-c,check-props,rate}``."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import appendix, props, solvers
from . import mdp as m
from .errors import BoundViolation, ConvergenceError, ModelError, RateFitError, UsageError
from .harness import ExperimentConfig, emit, fit_rate, resolve_mdp, run_experiment, write_csv

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_CONVERGENCE = 0, 2, 3, 4

log = logging.getLogger("avgq")


def cmd_solve(args):
    mdp, behavior = resolve_mdp(args.mdp, json.loads(args.behavior) if args.behavior else None)
    beta = m.tv_contraction_factor(mdp)
    if beta >= 1:
        log.warning("TV factor is %s; span contraction is not certified", beta)
    rep = solvers.solve_bellman(mdp, tol=args.tol)
    d = m.stationary_distribution(mdp, behavior)
    bar = solvers.solve_async_bellman(mdp, d, tol=args.tol)
    out = rep.to_dict()
    out.update(
        beta=beta,
        beta_bar=m.async_contraction_factor(beta, float(d.min())),
        d_min=float(d.min()),
        async_fixed_point=bar.fixed_point.tolist(),
        greedy_actions=solvers.greedy_policy(rep.fixed_point, mdp.n_actions).actions().tolist(),
    )
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _write(series, csv_path, json_path):
    for fmt, path in (("csv", csv_path), ("json", json_path)):
        if path:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            emit(series, fmt, path)
            log.info("wrote %s", path)


def _with_cli_overrides(config, args):
    changes = {k: getattr(args, k) for k in ("workers", "replications", "horizon", "base_seed")
               if getattr(args, k, None) is not None}
    return replace(config, **changes)


def cmd_learn(args):
    config = _with_cli_overrides(ExperimentConfig.load(args.config), args)
    series = run_experiment(config)
    csv_path = args.csv or config.csv
    json_path = args.json or config.json
    if not (csv_path or json_path):
        csv_path = "-"
    if csv_path == "-":
        write_csv(series, sys.stdout)
        csv_path = None
    _write(series, csv_path, json_path)
    return EXIT_OK


def cmd_appendix_c(args):
    figures = [args.figure] if args.figure else [1, 3, 4]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fig in figures:
        config = _with_cli_overrides(appendix.figure_config(fig), args)
        if fig == 3:
            series = appendix.output_policies(config)
        else:
            series = run_experiment(config)
        name = "figure_1_2" if fig in (1, 2) else f"figure_{fig}"
        _write(series, out / f"{name}.csv", out / f"{name}.json" if args.json else None)
        print(f"figure {fig}: {out / (name + '.csv')}")
    return EXIT_OK


def cmd_check_props(args):
    results = props.run_all(args.trials, args.seed)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<34} trials={r.trials} failures={r.failures} "
              f"worst_slack={r.worst:.3e}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CONVERGENCE


def cmd_rate(args):
    config = appendix.rate_config() if args.config is None else ExperimentConfig.load(args.config)
    config = _with_cli_overrides(config, args)
    series = run_experiment(config)
    k_min = config.horizon / 10 if args.window is None else None
    for v in config.variants:
        metric = "rel_sup_err_qgamma" if v.startswith("discounted") else "span_err_sq_qstar"
        slope = fit_rate(series, v, metric, window=args.window or 0.2, k_min=k_min)
        print(f"{v}: slope of log E[{metric}] vs log k = {slope:.4f}")
    _write(series, args.csv, None)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="avgq", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve for Q*, r* and the asynchronous fixed point")
    s.add_argument("mdp", help="'appendix_c' or a path to an MDP JSON file")
    s.add_argument("--behavior", help="behavior policy as a JSON nested list")
    s.add_argument("--tol", type=float, default=solvers.DEFAULT_TOL)
    s.set_defaults(func=cmd_solve)

    def runner_opts(q):
        q.add_argument("--workers", type=int)
        q.add_argument("--replications", type=int)
        q.add_argument("--horizon", type=int)
        q.add_argument("--base-seed", dest="base_seed", type=int)

    s = sub.add_parser("learn", help="run a replicated experiment from a JSON config")
    s.add_argument("config")
    s.add_argument("--csv", help="CSV output path ('-' for stdout)")
    s.add_argument("--json", help="JSON output path")
    runner_opts(s)
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("appendix-c", help="reproduce the example-MDP simulations")
    s.add_argument("--figure", type=int, choices=appendix.FIGURES)
    s.add_argument("--out", default="results")
    s.add_argument("--json", action="store_true", help="also write JSON series")
    runner_opts(s)
    s.set_defaults(func=cmd_appendix_c)

    s = sub.add_parser("check-props", help="randomized operator-inequality suites")
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_check_props)

    s = sub.add_parser("rate", help="fit the empirical convergence rate")
    s.add_argument("config", nargs="?", help="experiment config; defaults to the rate preset")
    s.add_argument("--window", type=float,
                   help="fit over this final fraction of checkpoints (default: last decade)")
    s.add_argument("--csv")
    runner_opts(s)
    s.set_defaults(func=cmd_rate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.set_printoptions(precision=6)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConvergenceError, BoundViolation, RateFitError, FloatingPointError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

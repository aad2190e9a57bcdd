import json
import math

import numpy as np
import pytest

from avgq import appendix
from avgq.errors import RateFitError, UsageError
from avgq.harness import (
    ExperimentConfig,
    MetricSeries,
    aggregate,
    build_appendix_c,
    compute_targets,
    emit,
    fit_rate,
    load_series,
    policy_rollout,
    resolve_mdp,
    run_experiment,
)
from avgq.learner import Learner, geometric_grid, make_rng
from avgq.mdp import Policy, save_mdp
from avgq.seminorm import span


def small(**kw):
    base = dict(variants=["adaptive_set", "universal"], horizon=2000, replications=4)
    base.update(kw)
    return ExperimentConfig(**base)


def synthetic(values, ks=None):
    ks = geometric_grid(100_000) if ks is None else ks
    return MetricSeries(ks=ks, replications=1, mean={"v": {"m": values(ks)}},
                        stderr={"v": {"m": np.zeros(ks.size)}})


def test_single_replication_equals_single_run():
    config = small(replications=1, variants=["adaptive_set"])
    series = run_experiment(config)
    mdp, behavior = build_appendix_c()
    lr = Learner(mdp, behavior, config.learner_config("adaptive_set"),
                 make_rng(config.base_seed, 0))
    log = lr.run()
    np.testing.assert_array_equal(series.mean["adaptive_set"]["span_q"], log.span_q)
    np.testing.assert_array_equal(series.stderr["adaptive_set"]["span_q"], 0.0)
    np.testing.assert_array_equal(series.final_q["adaptive_set"][0], lr.q)


def test_common_random_numbers():
    series = run_experiment(small(variants=["adaptive_set", "adaptive_centered"]))
    # the centered learner differs only by a multiple of e, so span errors agree
    np.testing.assert_allclose(series.mean["adaptive_set"]["span_err_sq_qstar"],
                               series.mean["adaptive_centered"]["span_err_sq_qstar"],
                               rtol=1e-8, atol=1e-12)


def test_metric_relations():
    series = run_experiment(small(variants=["adaptive_centered"], horizon=5000))
    mean = series.mean["adaptive_centered"]
    # centered iterates against the centered target: span^2 <= sup^2 <= 4 span^2
    assert np.all(mean["span_err_sq_qstar"] <= mean["sup_err_sq_qtilde"] + 1e-12)
    assert np.all(mean["sup_err_sq_qtilde"] <= 4 * mean["span_err_sq_qstar"] + 1e-12)
    assert np.all(mean["span_q"] <= mean["b_k"] + 1e-12)
    assert mean["stepsize"][0] == 0.0


def test_fit_rate_synthetic():
    assert fit_rate(synthetic(lambda k: 3.0 / k), "v", "m") == pytest.approx(-1, abs=1e-12)
    assert fit_rate(synthetic(lambda k: np.full(k.size, 2.0)), "v", "m") == pytest.approx(
        0, abs=1e-12)
    assert fit_rate(synthetic(lambda k: k ** -0.5), "v", "m",
                    k_min=10_000) == pytest.approx(-0.5, abs=1e-12)


def test_fit_rate_errors():
    with pytest.raises(RateFitError):
        fit_rate(synthetic(lambda k: 1.0 / k, geometric_grid(20)), "v", "m")
    with pytest.raises(RateFitError):
        fit_rate(synthetic(lambda k: np.zeros(k.size)), "v", "m")
    with pytest.raises(RateFitError):
        fit_rate(synthetic(lambda k: 1.0 / k), "v", "m", window=0)


def test_aggregate_stderr():
    rng = np.random.default_rng(0)
    for n in (16, 64, 256):
        rows = rng.normal(size=(n, 2000))
        _, se = aggregate(rows)
        assert np.mean(se) == pytest.approx(1 / math.sqrt(n), rel=0.3)
    mean, se = aggregate(np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(mean, [1.0, 2.0])
    np.testing.assert_array_equal(se, 0.0)


def test_stderr_shrinks_on_doubled_replications():
    a = run_experiment(small(variants=["universal"], replications=100))
    b = run_experiment(small(variants=["universal"], replications=200))
    for metric in ("span_err_sq_qbar", "span_q"):
        ratio = a.stderr["universal"][metric][-1] / b.stderr["universal"][metric][-1]
        assert ratio == pytest.approx(math.sqrt(2), rel=0.3)


def test_emit_json_round_trip(tmp_path):
    series = run_experiment(small())
    emit(series, "json", tmp_path / "s.json")
    back = load_series(tmp_path / "s.json")
    np.testing.assert_array_equal(back.ks, series.ks)
    for v in series.mean:
        for k in series.mean[v]:
            np.testing.assert_array_equal(back.mean[v][k], series.mean[v][k])
            np.testing.assert_array_equal(back.stderr[v][k], series.stderr[v][k])
        np.testing.assert_array_equal(back.final_q[v], series.final_q[v])
    assert back.header == series.header


def test_emit_csv_layout(tmp_path):
    series = run_experiment(small(variants=["universal"]))
    emit(series, "csv", tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("# ")
    assert json.loads(lines[0][2:])["horizon"] == 2000
    assert lines[1] == "variant,k,metric,mean,stderr"
    assert len(lines) == 2 + 6 * series.ks.size
    v, k, metric, mu, se = lines[2].split(",")
    assert (v, k, metric) == ("universal", "1", "span_err_sq_qstar")
    float(mu), float(se)


def test_emit_bad_format(tmp_path):
    with pytest.raises(UsageError):
        emit(run_experiment(small(replications=1)), "xml", tmp_path / "x")


def test_workers_do_not_change_output(tmp_path):
    emit(run_experiment(small(workers=1)), "csv", tmp_path / "a.csv")
    emit(run_experiment(small(workers=2)), "csv", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_config_validation():
    with pytest.raises(UsageError, match="empty"):
        ExperimentConfig(variants=[])
    with pytest.raises(UsageError):
        ExperimentConfig(variants=["bogus"])
    with pytest.raises(UsageError):
        ExperimentConfig(variants=["discounted_adaptive"])
    with pytest.raises(UsageError):
        ExperimentConfig(replications=0)
    with pytest.raises(UsageError):
        ExperimentConfig(alpha=10, h=2)
    with pytest.raises(UsageError, match="unknown config keys"):
        ExperimentConfig.from_dict({"horizon": 10, "stepsize": 3})


def test_config_load(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"horizon": 100, "replications": 2}))
    cfg = ExperimentConfig.load(path)
    assert cfg.horizon == 100 and cfg.replications == 2
    path.write_text("[1, 2]")
    with pytest.raises(UsageError):
        ExperimentConfig.load(path)
    with pytest.raises(UsageError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_header_omits_runtime_fields():
    h = small(workers=3).header()
    assert "workers" not in h and "csv" not in h
    assert h["alpha"] == 10.0


def test_resolve_file_mdp(tmp_path):
    mdp, _ = build_appendix_c()
    save_mdp(mdp, tmp_path / "m.json")
    loaded, pol = resolve_mdp(str(tmp_path / "m.json"))
    np.testing.assert_array_equal(pol.probs, 0.5)
    _, pol = resolve_mdp("appendix_c", [[0.5, 0.5], [0.1, 0.9]])
    np.testing.assert_array_equal(pol.probs, [[0.5, 0.5], [0.1, 0.9]])


def test_targets_separated():
    mdp, behavior = build_appendix_c()
    t = compute_targets(mdp, behavior, small())
    assert span(t.q_star - t.q_bar) > 0.01
    assert t.gain == pytest.approx(29 / 13)


def test_monotone_separation():
    config = small(horizon=50_000, replications=8)
    t = compute_targets(*build_appendix_c(), config)
    series = run_experiment(config, t)
    late = series.ks >= 5_000
    a, u = series.mean["adaptive_set"], series.mean["universal"]
    assert np.all(u["span_err_sq_qbar"][late] < u["span_err_sq_qstar"][late])
    assert np.all(a["span_err_sq_qstar"][late] < a["span_err_sq_qbar"][late])
    assert np.all(u["span_err_sq_qstar"][late] > a["span_err_sq_qstar"][late])
    assert u["span_err_sq_qstar"][-1] > 0.5 * span(t.q_bar - t.q_star) ** 2


def test_policy_rollout():
    mdp, _ = build_appendix_c()
    ks, avg = policy_rollout(mdp, Policy.deterministic([0, 1], 2), 50_000, 4)
    assert ks[-1] == 50_000
    assert avg[-1] == pytest.approx(29 / 13, abs=0.03)


def test_output_policies_series():
    config = appendix.figure_config(3, horizon=20_000, replications=4)
    out = appendix.output_policies(config)
    names = set(out.mean)
    assert {"optimal", "greedy_qbar", "greedy_adaptive_set", "greedy_universal"} <= names
    assert out.header["r_star"] == pytest.approx(29 / 13)
    assert out.header["exact_gain"]["optimal"] >= out.header["exact_gain"]["greedy_qbar"]
    assert 0 <= out.header["optimal_policy_recovery"]["adaptive_set"] <= 1


def test_figure_config_rejects_unknown():
    with pytest.raises(ValueError):
        appendix.figure_config(7)


def test_reference_summary():
    ref = appendix.reference_summary()
    assert ref["beta"] == 0.6
    assert ref["d_min"] == pytest.approx(16 / 205, abs=1e-12)
    assert ref["beta_bar"] == pytest.approx(1 - 0.4 * 16 / 205, abs=1e-12)

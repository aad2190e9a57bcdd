import json
from fractions import Fraction

import numpy as np
import pytest
from oracles import two_state_stationary

from avgq import mdp as m
from avgq import solvers
from avgq.errors import ModelError, UsageError
from avgq.props import expected_random_operator, random_mdp, random_policy
from avgq.seminorm import span


def test_appendix_c_tables(appendix_c):
    mdp, behavior = appendix_c
    np.testing.assert_array_equal(mdp.reward, [[1, 1], [2, 3]])
    np.testing.assert_array_equal(mdp.transition[0], [[0.2, 0.8], [0.8, 0.2]])
    np.testing.assert_array_equal(mdp.transition[1], [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(behavior.probs, [[0.2, 0.8], [0.8, 0.2]])


def test_validation():
    with pytest.raises(ModelError):
        m.TabularMdp(np.array([[[0.5, 0.6]], [[1.0, 0.0]]]), np.zeros((2, 1)))
    with pytest.raises(ModelError):
        m.TabularMdp(np.array([[[1.2, -0.2]], [[1.0, 0.0]]]), np.zeros((2, 1)))
    with pytest.raises(ModelError):
        m.TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 2)))
    with pytest.raises(ModelError):
        m.Policy(np.array([[0.5, 0.4]]))
    with pytest.raises(ModelError):
        m.Policy(np.array([[1.0, 0.0]])).require_full_support()


def test_mdp_is_immutable(appendix_c):
    mdp, _ = appendix_c
    with pytest.raises(ValueError):
        mdp.reward[0, 0] = 5.0


def test_json_round_trip(tmp_path, appendix_c):
    mdp, _ = appendix_c
    path = tmp_path / "mdp.json"
    m.save_mdp(mdp, path)
    back = m.load_mdp(path)
    np.testing.assert_array_equal(back.transition, mdp.transition)
    np.testing.assert_array_equal(back.reward, mdp.reward)
    assert back.name == "appendix_c"


def test_json_size_mismatch(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n_states": 2, "n_actions": 1,
                                "transition": [[[1.0]]], "reward": [[0.0]]}))
    with pytest.raises(ModelError):
        m.load_mdp(path)


def test_bellman_at_zero_is_reward(appendix_c):
    mdp, _ = appendix_c
    np.testing.assert_array_equal(m.bellman(mdp, np.zeros(4)), mdp.reward.reshape(-1))


def test_bellman_shift_covariance(appendix_c):
    mdp, _ = appendix_c
    rng = np.random.default_rng(1)
    q, c = rng.normal(size=4), rng.normal()
    np.testing.assert_allclose(m.bellman(mdp, q + c), m.bellman(mdp, q) + c, atol=1e-12)


def test_bellman_residual_at_q_star(appendix_c):
    mdp, _ = appendix_c
    q = solvers.solve_bellman(mdp).fixed_point
    np.testing.assert_allclose(m.bellman(mdp, q) - q, np.full(4, 29 / 13), atol=1e-9)


def test_bellman_shape_mismatch(appendix_c):
    with pytest.raises(UsageError):
        m.bellman(appendix_c[0], np.zeros(3))


def test_tv_factor_examples(appendix_c):
    assert m.tv_contraction_factor(appendix_c[0]) == 0.6
    same = m.TabularMdp(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)))
    assert m.tv_contraction_factor(same) == 0
    disjoint = m.TabularMdp(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]), np.zeros((2, 1)))
    assert m.tv_contraction_factor(disjoint) == 1


def test_tv_matches_half_l1(appendix_c):
    rng = np.random.default_rng(3)
    for _ in range(50):
        mdp = random_mdp(rng)
        rows = mdp.transition.reshape(mdp.n_pairs, -1)
        half_l1 = max(0.5 * np.abs(a - b).sum() for a in rows for b in rows)
        assert m.tv_contraction_factor(mdp) == pytest.approx(half_l1, abs=1e-12)


def test_stationary_single_pair(single_pair):
    d = m.stationary_distribution(single_pair, m.Policy(np.ones((1, 1))))
    np.testing.assert_array_equal(d, [1.0])


def test_stationary_optimal_chain(appendix_c):
    mdp, _ = appendix_c
    mu = m.stationary_state_distribution(mdp, m.Policy.deterministic([0, 1], 2))
    np.testing.assert_allclose(mu, [5 / 13, 8 / 13], atol=1e-10)


def test_stationary_behavior_chain(appendix_c):
    mdp, behavior = appendix_c
    # p(s1|s1) = 0.2*0.2 + 0.8*0.8 = 0.68 and p(s1|s2) = 0.5
    mu1, mu2 = two_state_stationary(Fraction(68, 100), Fraction(1, 2))
    assert (mu1, mu2) == (Fraction(25, 41), Fraction(16, 41))
    expected = [float(mu1 * Fraction(1, 5)), float(mu1 * Fraction(4, 5)),
                float(mu2 * Fraction(4, 5)), float(mu2 * Fraction(1, 5))]
    d = m.stationary_distribution(mdp, behavior)
    np.testing.assert_allclose(d, expected, atol=1e-12)
    assert d.sum() == pytest.approx(1, abs=1e-10)
    assert d.min() == pytest.approx(16 / 205, abs=1e-12)


def test_stationary_matches_power_iteration():
    rng = np.random.default_rng(5)
    for _ in range(30):
        mdp = random_mdp(rng)
        pol = random_policy(rng, mdp.n_states, mdp.n_actions)
        chain = m.state_chain(mdp, pol)
        np.testing.assert_allclose(m.chain_stationary(chain), m.power_stationary(chain),
                                   atol=1e-10)


def test_state_action_chain_stationary(appendix_c):
    mdp, behavior = appendix_c
    pair_chain = m.state_action_chain(mdp, behavior)
    np.testing.assert_allclose(pair_chain.sum(axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(m.chain_stationary(pair_chain),
                               m.stationary_distribution(mdp, behavior), atol=1e-12)


def test_reducible_chain_rejected():
    p = np.zeros((2, 1, 2))
    p[0, 0, 0] = p[1, 0, 1] = 1.0
    mdp = m.TabularMdp(p, np.zeros((2, 1)))
    with pytest.raises(ModelError, match="reducible"):
        m.stationary_distribution(mdp, m.Policy(np.ones((2, 1))))


def test_periodic_chain_rejected():
    p = np.zeros((2, 1, 2))
    p[0, 0, 1] = p[1, 0, 0] = 1.0
    mdp = m.TabularMdp(p, np.zeros((2, 1)))
    with pytest.raises(ModelError, match="period 2"):
        m.stationary_distribution(mdp, m.Policy(np.ones((2, 1))))


def test_chain_period():
    three_cycle = np.roll(np.eye(3), 1, axis=1)
    assert m.chain_period(three_cycle) == 3
    lazy = 0.5 * three_cycle + 0.5 * np.eye(3)
    assert m.chain_period(lazy) == 1


def test_async_bellman_degenerate_weights(appendix_c):
    mdp, _ = appendix_c
    q = np.array([0.3, -1.0, 2.0, 0.5])
    np.testing.assert_array_equal(m.async_bellman(mdp, q, np.ones(4)), m.bellman(mdp, q))
    np.testing.assert_allclose(m.async_bellman(mdp, q, np.full(4, 0.25)) - q,
                               (m.bellman(mdp, q) - q) / 4, atol=1e-12)


def test_async_bellman_rejects_bad_weights(appendix_c):
    mdp, _ = appendix_c
    with pytest.raises(UsageError):
        m.async_bellman(mdp, np.zeros(4), np.array([0.5, 0.0, 0.25, 0.25]))
    with pytest.raises(UsageError):
        m.async_bellman(mdp, np.zeros(4), np.array([0.5, 1.5, 0.25, 0.25]))


def test_async_fixed_point_residual(appendix_c):
    mdp, behavior = appendix_c
    d = m.stationary_distribution(mdp, behavior)
    q_bar = solvers.solve_async_bellman(mdp, d).fixed_point
    assert span(m.async_bellman(mdp, q_bar, d) - q_bar) < 1e-9


def test_random_operator_changes_one_entry(appendix_c):
    mdp, _ = appendix_c
    q = np.array([0.3, -1.0, 2.0, 0.5])
    out = m.random_operator(mdp, q, np.full(4, 0.3), (1, 0, 0))
    changed = np.flatnonzero(out != q)
    assert changed.tolist() == [2]
    # TD = 2 + max(0.3, -1.0) - 2.0 = 0.3, weighted by 1/0.3
    assert out[2] == pytest.approx(2.0 + 0.3 / 0.3, abs=1e-12)


def test_random_operator_g_specialization(appendix_c):
    mdp, _ = appendix_c
    q = np.array([0.3, -1.0, 2.0, 0.5])
    y = (0, 1, 1)
    g = m.operator_g(mdp, q, y)
    expected = q.copy()
    expected[1] = mdp.reward[0, 1] + q[2:].max()
    np.testing.assert_allclose(g, expected, atol=1e-12)
    np.testing.assert_array_equal(m.random_operator(mdp, q, np.ones(4), y), g)


def test_random_operator_zero_td(appendix_c):
    mdp, _ = appendix_c
    # R(0,0) + max Q(1,.) - Q(0,0) = 1 + 2 - 3 = 0
    q = np.array([3.0, 0.0, 2.0, 1.0])
    np.testing.assert_array_equal(m.random_operator(mdp, q, np.full(4, 0.1), (0, 0, 1)), q)


def test_random_operator_bad_triple(appendix_c):
    with pytest.raises(UsageError):
        m.random_operator(appendix_c[0], np.zeros(4), np.ones(4), (2, 0, 0))


def test_random_operator_unbiased(appendix_c):
    mdp, behavior = appendix_c
    d = m.stationary_distribution(mdp, behavior)
    rng = np.random.default_rng(11)
    for _ in range(20):
        q = rng.normal(size=4) * 5
        np.testing.assert_allclose(expected_random_operator(mdp, q, d), m.bellman(mdp, q),
                                   atol=1e-10)


def test_universal_target_is_async_operator(appendix_c):
    mdp, behavior = appendix_c
    d = m.stationary_distribution(mdp, behavior)
    q = np.array([0.3, -1.0, 2.0, 0.5])
    nu = m.triple_distribution(mdp, d)
    mean_g = sum(nu[s, a, t] * m.operator_g(mdp, q, (s, a, t))
                 for s in range(2) for a in range(2) for t in range(2))
    np.testing.assert_allclose(mean_g, m.async_bellman(mdp, q, d), atol=1e-12)

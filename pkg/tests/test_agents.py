import numpy as np
import pytest

from u2usim.agents import (AcAgent, DqnAgent, EpsilonSchedule, GreedyAgent, QTable, TabularQAgent, epsilon_greedy,
                           make_agent, q_update)
from u2usim.config import AgentConfig, toy_config
from u2usim.env import JointAction, U2UEnv

from conftest import small_config
from oracles import four_cell_grid, greedy_policy, run_q_learning, two_state_mdp, value_iteration


def rngs(seed=0):
    return [np.random.default_rng(s) for s in np.random.SeedSequence([seed, 0xA6E]).spawn(2)]


def test_epsilon_schedule():
    s = EpsilonSchedule(1.0, 0.1, 100)
    assert s(0) == 1.0
    assert s(50) == pytest.approx(0.55)
    assert s(100) == s(10_000) == 0.1


def test_epsilon_greedy_per_head():
    vals = np.array([0.0, 3.0, 1.0, 5.0, 4.0])
    sl = [slice(0, 2), slice(2, 5)]
    out = epsilon_greedy(vals, sl, [0, 1], 0.0, np.random.default_rng(0))
    assert out.tolist() == [1, 1]
    assert epsilon_greedy(vals, sl, [1], 0.0, np.random.default_rng(0)).tolist() == [-1, 1]
    # full exploration covers every arm
    seen = {int(epsilon_greedy(vals, sl, [1], 1.0, np.random.default_rng(i))[1]) for i in range(50)}
    assert seen == {0, 1, 2}


def test_q_update_hand_example():
    t = QTable([2, 3], alpha=0.5, gamma=0.8)
    t.values("s2")[:] = [1.0, 2.0, 0.0, 4.0, 1.0]
    out = q_update(t, "s1", [1, 0], 1.0, "s2")
    # head 0: 0.5 * (1 + 0.8 * 2); head 1: 0.5 * (1 + 0.8 * 4)
    np.testing.assert_allclose(out, [1.3, 2.1])
    assert t.values("s1").tolist() == pytest.approx([0.0, 1.3, 2.1, 0.0, 0.0])
    assert q_update(t, "s3", [0, 0], 1.0, "s2", terminal=True).tolist() == [0.5, 0.5]


def test_qtable_rejects_bad_alpha():
    with pytest.raises(ValueError):
        QTable([2], alpha=0.0)


@pytest.mark.parametrize("mdp,states,starts", [(two_state_mdp(), [0, 1], None),
                                               (four_cell_grid(), [0, 1, 2], [0, 1, 2])])
def test_q_learning_matches_value_iteration(mdp, states, starts):
    q_star = value_iteration(mdp, 0.8)
    table = run_q_learning(mdp, 0.8, 0.1, 10_000, 0, starts)
    assert greedy_policy(table, states) == q_star[states].argmax(axis=1).tolist()
    np.testing.assert_allclose([table.peek(s) for s in states], q_star[states], atol=0.05)


def test_value_iteration_oracle_frozen():
    q = value_iteration(two_state_mdp(), 0.8)
    # V(s1) = 1 / (1 - 0.8); Q(s0, move) = 0.8 V(s1)
    np.testing.assert_allclose(q, [[3.7, 4.0], [5.0, 3.2]])


def test_dqn_targets_and_fixed_point():
    cfg = AgentConfig(dqn_hidden=[8], batch_size=4, target_sync=1)
    ag = DqnAgent(2, [2, 3], cfg, *rngs())
    r = np.array([1.0, 0.0])
    nxt = np.array([[0.1, 0.2], [0.3, -0.4]])
    qn = ag.target.forward(nxt)
    want = r[:, None] + 0.8 * np.stack([qn[:, :2].max(1), qn[:, 2:].max(1)], 1)
    np.testing.assert_allclose(ag.td_targets(r, nxt, np.array([False, False])), want)
    np.testing.assert_allclose(ag.td_targets(r, nxt, np.array([True, True])), np.tile(r[:, None], 2))


def test_dqn_learns_constant_reward_fixed_point():
    # one state, every action pays 1: Q converges to 1 / (1 - gamma)
    cfg = AgentConfig(dqn_hidden=[16], batch_size=8, target_sync=20, dqn_lr=0.01)
    ag = DqnAgent(1, [2], cfg, *rngs(1))
    s = np.ones(1)
    for i in range(3000):
        ag.remember(s, [i % 2], 1.0, s)
    np.testing.assert_allclose(ag.online.forward(s), 5.0, rtol=0.05)


def test_dqn_loss_ignores_inactive_heads():
    cfg = AgentConfig(dqn_hidden=[8], batch_size=2)
    ag = DqnAgent(2, [2, 2], cfg, *rngs())
    before = ag.online.copy()
    batch = (np.ones((2, 2)), np.array([[0, -1], [1, -1]]), np.zeros(2), np.ones((2, 2)), np.ones(2, dtype=bool))
    ag.dqn_learn(batch)
    # output biases of the inactive head do not move
    np.testing.assert_array_equal(ag.online.b[-1][2:], before.b[-1][2:])
    assert not np.array_equal(ag.online.b[-1][:2], before.b[-1][:2])


def test_ac_td_error_formula():
    cfg = AgentConfig(linear_critic=True, critic_lr=0.1, actor_hidden=[4])
    ag = AcAgent(2, [2], cfg, *rngs())
    ag.critic.W[0][...] = [[1.0], [2.0]]
    s, s2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    delta, _ = ag.ac_learn(s, [0], 0.5, s2)
    # delta = r + gamma * (V(s') - V(s)) = 0.5 + 0.8 * (2 - 1)
    assert delta == pytest.approx(1.3)
    # critic moves along delta * grad V(s) = delta * s
    np.testing.assert_allclose(ag.critic.W[0].ravel(), [1.0 + 0.1 * 1.3, 2.0])


def test_ac_policy_moves_toward_rewarded_action():
    ag = AcAgent(1, [2], AgentConfig(actor_lr=0.01), *rngs())
    s = np.ones(1)
    p0 = ag.policy(s)[0]
    for _ in range(50):
        ag.ac_learn(s, [0], 1.0, s, terminal=True)
    assert ag.policy(s)[0] > p0


def test_greedy_last_head_is_first_argmax():
    cfg = toy_config()
    env = U2UEnv(cfg)
    env.reset(2)
    a = GreedyAgent().act(env, None)
    # the last head is optimized with every other head already fixed
    alts = [JointAction(a.bs_move, a.ue_moves, a.area_resolutions, a.ue_power_levels[:-1] + (c,))
            for c in range(3)]
    vals = [m.qoe for m in env.evaluate_batch(alts)]
    assert a.ue_power_levels[-1] == int(np.argmax(vals))


def test_greedy_tie_break_lowest_index():
    cfg = small_config()
    env = U2UEnv(cfg)
    env.reset(0)
    # with every head valued equally the greedy choice is all zeros
    env.evaluate_batch = lambda acts, fading_db=0.0: [type("M", (), {"qoe": 0.0})() for _ in acts]
    a = GreedyAgent().act(env, None)
    assert a == JointAction(0, (0,), (0,), (0,))


def test_make_agent_is_seeded():
    env = U2UEnv(toy_config())
    env.reset(0)
    a, b = make_agent("dqn", env, AgentConfig(), 3), make_agent("dqn", env, AgentConfig(), 3)
    np.testing.assert_array_equal(a.online.W[0], b.online.W[0])
    c = make_agent("ac", env, AgentConfig(), 4)
    assert not np.array_equal(c.actor.W[0], make_agent("ac", env, AgentConfig(), 5).actor.W[0])
    with pytest.raises(ValueError):
        make_agent("nope", env, AgentConfig(), 0)


@pytest.mark.parametrize("kind", ["dqn", "ac", "tabular"])
def test_state_dict_roundtrip(kind):
    cfg = small_config()
    env = U2UEnv(cfg)
    s = env.reset(0)
    ag = make_agent(kind, env, cfg.agent, 0)
    ag.set_training_horizon(100)
    for _ in range(40):
        act = ag.act(env, s)
        out = env.step(act)
        ag.learn(s, act, out.reward, out.next_state, env)
        s = out.next_state
        if out.done:
            s = env.reset(1)
    clone = make_agent(kind, env, cfg.agent, 9)
    import json
    clone.load_state_dict(json.loads(json.dumps(ag.state_dict())))
    assert clone.act(env, s, explore=False) == ag.act(env, s, explore=False)


def test_tabular_key_drops_previous_qoe():
    s = np.array([0.1, 0.2, 0.7])
    t = np.array([0.1, 0.2, -0.3])
    assert TabularQAgent.key(s) == TabularQAgent.key(t)

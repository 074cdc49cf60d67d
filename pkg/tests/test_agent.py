import numpy as np
import pytest

from junctionrl.agent import DQNAgent, ReplayMemory, epsilon_at, run_episode, select_action, td_target, \
    training_curriculum
from junctionrl.config import AgentConfig, DemandSchedule, make_config
from junctionrl.env import JunctionEnv
from junctionrl.nn import Network, forward
from junctionrl.rewards import named_spec


def small_agent_cfg(**kw):
    base = dict(hidden_sizes=(16, 16), minibatch_size=8, replay_capacity=500, updates_per_episode=2,
                target_sync_period=3, learning_rate=1e-3)
    base.update(kw)
    return AgentConfig(**base)


def short_env(steps=300):
    return JunctionEnv(make_config(overrides={"sim": {"episode_steps": steps}}))


def test_greedy_selection():
    rng = np.random.default_rng(0)
    assert select_action(np.array([1.0, 3.0, 2.0]), 0.0, rng) == 1
    assert select_action(np.array([2.0, 2.0, 1.0]), 0.0, rng) == 0


def test_td_target():
    assert td_target(1.0, np.array([0.5, 2.0, -1.0]), 0.8) == pytest.approx(2.6)
    assert td_target(1.0, np.array([5.0, 7.0, 9.0]), 0.0) == 1.0
    zero_net = Network.init((280, 4, 3), seed=0)
    for p in zero_net.params:
        p[...] = 0
    assert td_target(-3.0, forward(zero_net, np.ones(280)), 0.8) == -3.0


def test_td_target_batched():
    y = td_target(np.array([1.0, 0.0]), np.array([[0.0, 1.0, 2.0], [3.0, 0.0, 0.0]]), 0.5)
    np.testing.assert_allclose(y, [2.0, 1.5])


def test_curriculum():
    rates = training_curriculum(1500)
    assert rates[0] == 1200.0
    assert rates[-1] == pytest.approx(2571.0, abs=1e-9)
    assert round(rates[749], 1) == 1885.0
    assert np.all(np.diff(rates) > 0)


def test_epsilon_schedule_bounds():
    cfg = AgentConfig()
    values = [epsilon_at(e, 1500, cfg) for e in range(1500)]
    assert values[0] == 1.0
    assert min(values) == pytest.approx(0.05) and max(values) == 1.0
    assert values[900] == pytest.approx(0.05)
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_replay_fifo_eviction():
    mem = ReplayMemory(5, obs_dim=2)
    for k in range(8):
        mem.push(np.full(2, k), k % 3, float(k), np.full(2, k + 1))
    assert len(mem) == 5
    assert sorted(mem.rewards.tolist()) == [3.0, 4.0, 5.0, 6.0, 7.0]


def test_replay_rejects_non_finite_reward():
    mem = ReplayMemory(5, obs_dim=2)
    with pytest.raises(ValueError):
        mem.push(np.zeros(2), 0, float("nan"), np.zeros(2))


def test_replay_sample_shapes():
    mem = ReplayMemory(50, obs_dim=4)
    for k in range(10):
        mem.push(np.full(4, k / 10), k % 3, float(k), np.zeros(4))
    obs, act, rew, nxt = mem.sample(16, np.random.default_rng(0))
    assert obs.shape == (16, 4) and obs.dtype == np.float64
    assert set(act) <= {0, 1, 2} and rew.shape == (16,)


def test_episode_simulates_1800_seconds():
    cfg = make_config()
    env = JunctionEnv(cfg)
    agent = DQNAgent(small_agent_cfg(), seed=0)
    stats = run_episode(agent, env, named_spec("queues"), seed=1, epsilon=1.0, train=False)
    assert env.world.step_count == 3000
    assert env.clock == pytest.approx(1800.0)
    assert stats["transitions"] == stats["decisions"]


def test_greedy_episode_is_repeatable():
    agent = DQNAgent(small_agent_cfg(), seed=3)
    actions = []
    for _ in range(2):
        seq = []
        run_episode(agent, short_env(), named_spec("queues"), seed=5, epsilon=0.0, train=False,
                    on_decision=lambda env, ctx, a, r: seq.append(a))
        actions.append(seq)
    assert actions[0] == actions[1] and len(actions[0]) > 0


def test_target_sync_and_staleness():
    cfg = small_agent_cfg(target_sync_period=3, minibatch_size=4)
    agent = DQNAgent(cfg, seed=0)
    env = short_env(200)
    assert agent.target == agent.net
    for e in range(1, 7):
        before = agent.target.copy()
        run_episode(agent, env, named_spec("queues"), seed=e, epsilon=1.0, train=True)
        if e % 3 == 0:
            assert agent.target == agent.net
        else:
            assert agent.target == before
            assert agent.target != agent.net


def test_underfull_memory_skips_update():
    agent = DQNAgent(small_agent_cfg(minibatch_size=400, replay_capacity=500), seed=0)
    before = agent.net.copy()
    run_episode(agent, short_env(60), named_spec("queues"), seed=0, epsilon=1.0, train=True)
    assert agent.net == before


def test_stored_rewards_match_catalogue():
    agent = DQNAgent(small_agent_cfg(), seed=0)
    seen = []
    stats = run_episode(agent, short_env(), named_spec("delta_delay_p80"), seed=2, epsilon=1.0, train=True,
                        on_decision=lambda env, ctx, a, r: seen.append(r))
    stored = agent.memory.rewards[:len(agent.memory)]
    assert np.allclose(stored[:len(seen) - 1], seen[1:])
    assert stats["transitions"] == len(agent.memory)


def test_checkpoint_round_trip(tmp_path):
    agent = DQNAgent(small_agent_cfg(), seed=0)
    run_episode(agent, short_env(), named_spec("queues"), seed=0, epsilon=1.0, train=True)
    agent.save(tmp_path / "ck", {"reward": "queues"})
    back = DQNAgent.load(tmp_path / "ck")
    assert back.net == agent.net and back.target == agent.target
    assert back.episodes_done == 1
    assert back.rng.random() == agent.rng.random()

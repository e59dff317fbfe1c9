import logging

import numpy as np
import pytest
from scipy import stats

from snnprune.agent import (
    STATE_DIM,
    AgentConfig,
    DdpgAgent,
    NoiseSchedule,
    ReplayBuffer,
    Transition,
    push_trajectory,
    td_target,
    truncated_normal,
)
from snnprune.errors import ContractViolation


def _ks_vs_truncnorm(draws, mu, sigma):
    a, b = (0 - mu) / sigma, (1 - mu) / sigma
    return stats.kstest(draws, stats.truncnorm(a, b, loc=mu, scale=sigma).cdf).statistic


def test_truncated_normal_narrow_mean():
    draws = truncated_normal(0.5, 0.01, rng=np.random.default_rng(0), size=100_000)
    assert abs(draws.mean() - 0.5) < 0.005


def test_truncated_normal_matches_analytic_cdf():
    draws = truncated_normal(0.5, 0.5, rng=np.random.default_rng(1), size=100_000)
    assert draws.min() >= 0 and draws.max() < 1
    assert _ks_vs_truncnorm(draws, 0.5, 0.5) < 0.01


def test_truncated_normal_rejects_hopeless_mean():
    with pytest.raises(ContractViolation):
        truncated_normal(50.0, 0.5, rng=np.random.default_rng(0))


def test_noise_schedule():
    n = NoiseSchedule()
    seen = []
    for _ in range(4):
        seen.append(n.sigma)
        n.step()
    assert seen == [0.5 * 0.98**k for k in range(4)]


def _state(v=0.5):
    return np.full(STATE_DIM, v)


def test_actions_in_unit_interval_and_deterministic():
    agent = DdpgAgent(seed=3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = rng.random(STATE_DIM)
        a = agent.act(s)
        assert 0 <= a < 1 and a == agent.act(s)


def test_vanishing_noise_recovers_actor():
    agent = DdpgAgent(seed=4)
    s = _state(0.3)
    a = agent.act(s, NoiseSchedule(sigma0=1e-9))
    assert a == pytest.approx(agent.policy(s), abs=1e-7)


def test_warmup_actions_follow_truncated_normal():
    agent = DdpgAgent(seed=5)
    draws = np.array([agent.warmup_action() for _ in range(20_000)])
    assert _ks_vs_truncnorm(draws, 0.5, 0.5) < 0.015


def test_terminal_target_is_reward():
    r = np.array([[0.3], [0.7]])
    y = td_target(r, np.array([[1.0], [0.0]]), np.array([[5.0], [2.0]]))
    assert y[0, 0] == 0.3 and y[1, 0] == pytest.approx(2.7)


def _terminal(reward, a=0.4, s=None):
    return Transition(_state() if s is None else s, a, reward, None, True)


def test_critic_learns_bandit_value():
    agent = DdpgAgent(AgentConfig(batch_size=16), seed=0)
    buf = ReplayBuffer(100, seed=0)
    for _ in range(32):
        buf.push(_terminal(0.7))
    agent.update(buf, 16, steps=2000)
    assert agent.q_value(_state(), 0.4)[0] == pytest.approx(0.7, abs=1e-2)


def test_full_soft_update_copies_online_nets():
    agent = DdpgAgent(AgentConfig(tau_soft=1.0, batch_size=4), seed=1)
    buf = ReplayBuffer(10, seed=1)
    for r in (0.1, 0.2, 0.3, 0.4):
        buf.push(_terminal(r))
    agent.update(buf, 4)
    for t, o in ((agent.actor_target, agent.actor), (agent.critic_target, agent.critic)):
        assert all(np.array_equal(a, b) for a, b in zip(t.params, o.params))


def test_update_skipped_on_small_buffer(caplog):
    agent = DdpgAgent(seed=0)
    buf = ReplayBuffer(10)
    buf.push(_terminal(1.0))
    with caplog.at_level(logging.WARNING):
        assert agent.update(buf, 4) is None
    assert "skipped" in caplog.text


def test_update_keeps_parameters_finite():
    agent = DdpgAgent(AgentConfig(batch_size=32), seed=2)
    buf = ReplayBuffer(500, seed=2)
    rng = np.random.default_rng(0)
    for _ in range(60):
        s1, s2 = rng.random(STATE_DIM), rng.random(STATE_DIM)
        push_trajectory(buf, [Transition(s1, rng.random() * 0.99, 0.0, s2, False), _terminal(rng.random(), s=s2)])
    stats_ = agent.update(buf, 32, steps=200)
    assert np.isfinite(stats_.critic_loss)
    assert all(np.isfinite(p).all() for p in agent.actor.params + agent.critic.params)


def test_trajectory_validation():
    buf = ReplayBuffer(10)
    with pytest.raises(ContractViolation):
        push_trajectory(buf, [])
    bad = [Transition(_state(), 0.1, 0.5, _state(), False), _terminal(1.0)]
    with pytest.raises(ContractViolation):
        push_trajectory(buf, bad)
    with pytest.raises(ContractViolation):
        push_trajectory(buf, [Transition(_state(), 0.1, 0.0, _state(), False)])
    with pytest.raises(ContractViolation):
        Transition(_state(), 1.0, 0.0, None, True)
    with pytest.raises(ContractViolation):
        Transition(_state(1.5), 0.1, 0.0, None, True)
    with pytest.raises(ContractViolation):
        Transition(_state(), 0.1, 0.0, None, False)


def test_trajectory_rewards_only_at_end():
    buf = ReplayBuffer(10)
    traj = [Transition(_state(), 0.1, 0.0, _state(), False) for _ in range(2)] + [_terminal(0.8)]
    push_trajectory(buf, traj)
    assert [t.reward for t in buf.items] == [0.0, 0.0, 0.8]


def test_buffer_evicts_oldest():
    buf = ReplayBuffer(3)
    for r in range(5):
        buf.push(_terminal(float(r)))
    assert [t.reward for t in buf.items] == [2.0, 3.0, 4.0]


def test_checkpoint_round_trip(tmp_path):
    agent = DdpgAgent(seed=7)
    agent.save(tmp_path / "a.spag")
    back = DdpgAgent.load(tmp_path / "a.spag")
    back.save(tmp_path / "b.spag")
    assert (tmp_path / "a.spag").read_bytes() == (tmp_path / "b.spag").read_bytes()
    s = _state(0.2)
    assert back.policy(s) == pytest.approx(agent.policy(s), abs=1e-5)
    (tmp_path / "c.spag").write_bytes(b"XXXX" + bytes(8))
    with pytest.raises(ContractViolation):
        DdpgAgent.load(tmp_path / "c.spag")


def test_critic_recovers_returns_along_stored_episodes():
    # episodes recorded with the actor's own actions; actor held fixed so the
    # bootstrapped targets follow the stored chain
    agent = DdpgAgent(AgentConfig(batch_size=9, actor_lr=0.0), seed=0)
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(100, seed=0)
    episodes = []
    for reward in (0.2, 0.9, 0.5):
        states = [rng.random(STATE_DIM) for _ in range(3)]
        actions = [agent.act(s) for s in states]
        push_trajectory(buf, [
            Transition(states[j], actions[j], reward if j == 2 else 0.0, None if j == 2 else states[j + 1], j == 2)
            for j in range(3)
        ])
        episodes.append((states, actions, reward))
    agent.update(buf, 9, steps=3000)
    for states, actions, reward in episodes:
        for s, a in zip(states, actions):
            assert abs(agent.q_value(s, a)[0] - reward) < 0.05


def test_ten_thousand_updates_stay_finite():
    agent = DdpgAgent(AgentConfig(batch_size=64), seed=8)
    buf = ReplayBuffer(2000, seed=8)
    rng = np.random.default_rng(8)
    for _ in range(100):
        states = [rng.random(STATE_DIM) for _ in range(3)]
        push_trajectory(buf, [
            Transition(states[j], float(rng.random() * 0.999), 0.0 if j < 2 else float(rng.normal()),
                       None if j == 2 else states[j + 1], j == 2)
            for j in range(3)
        ])
    agent.update(buf, 64, steps=10_000)
    assert all(np.isfinite(p).all() for net in (agent.actor, agent.critic, agent.actor_target, agent.critic_target)
               for p in net.params)
    assert 0 <= agent.policy(rng.random(STATE_DIM)) < 1

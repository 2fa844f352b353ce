import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from empowerd.agent import (BUFFER_CAPACITY, Batch, DqnAgent, ReplayBuffer, Transition, clip_extrinsic)
from empowerd.envs import make_env
from empowerd.errors import InvalidInput, InvalidState, NumericFault
from empowerd.nn import AdamState, DenseNet


def linear_agent(q_table, **kw):
    """Agent whose Q-values on a one-hot observation are rows of ``q_table``."""
    q_table = np.asarray(q_table, dtype=np.float64)
    n_obs, n_act = q_table.shape
    net = DenseNet([n_obs, n_act], [q_table.T.copy()], [np.zeros(n_act)])
    return DqnAgent(net, net.copy(), AdamState.for_net(net, 1e-4), **kw)


def zero_agent(obs_dim=3, action_count=4, **kw):
    net = DenseNet.zeros([obs_dim, 8, action_count])
    return DqnAgent(net, net.copy(), AdamState.for_net(net, 1e-4), **kw)


def transition(i, obs_dim=2):
    return Transition(np.full(obs_dim, float(i)), i % 2, np.full(obs_dim, i + 0.5), 0.0, False)


# -- clip ---------------------------------------------------------------------

def test_clip_extrinsic():
    assert clip_extrinsic(5.0) == 1.0
    assert clip_extrinsic(-0.3) == -0.3
    assert clip_extrinsic(-7) == -1.0
    np.testing.assert_array_equal(clip_extrinsic(np.array([2.0, -2.0, 0.5])), [1.0, -1.0, 0.5])


@given(st.floats(-1e6, 1e6))
def test_clip_is_idempotent(x):
    assert clip_extrinsic(clip_extrinsic(x)) == clip_extrinsic(x)


# -- action selection ---------------------------------------------------------

def test_greedy_picks_argmax():
    agent = linear_agent([[0.1, 0.9, 0.3]], epsilon=0.0)
    assert agent.select_action(np.array([1.0]), np.random.default_rng(0)) == 1


def test_ties_break_to_lowest_index():
    agent = linear_agent([[0.5, 0.5]], epsilon=0.0)
    rng = np.random.default_rng(0)
    assert {agent.select_action(np.array([1.0]), rng) for _ in range(20)} == {0}


def test_zero_net_q_values():
    agent = zero_agent()
    q = agent.q_values(np.ones(3))
    assert not np.any(q)
    assert np.array_equal(q, agent.q_values(np.ones(3)))
    with pytest.raises(InvalidInput):
        agent.q_values(np.ones(4))


def test_uniform_exploration_frequency():
    agent = zero_agent(epsilon=1.0)
    rng = np.random.default_rng(1)
    draws = np.array([agent.select_action(np.ones(3), rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=4) / draws.size
    assert np.all(np.abs(freq - 0.25) < 0.01)


def test_policy_probs():
    agent = linear_agent([[0.0, 1.0, 0.0, 0.0]], epsilon=0.2)
    np.testing.assert_allclose(agent.policy_probs(np.array([1.0])), [[0.05, 0.85, 0.05, 0.05]])
    np.testing.assert_allclose(agent.policy_probs(np.array([1.0]), epsilon=0.0), [[0, 1, 0, 0]])


def test_invalid_epsilon_rejected():
    with pytest.raises(InvalidInput):
        zero_agent(epsilon=1.5).select_action(np.ones(3), np.random.default_rng(0))


# -- targets ------------------------------------------------------------------

def test_terminal_target_is_reward():
    agent = linear_agent([[3.0, 4.0], [5.0, 6.0]])
    t = Transition(np.array([1.0, 0.0]), 0, np.array([0.0, 1.0]), 1.0, True)
    assert agent.double_q_target(t) == 1.0


def test_double_q_arithmetic():
    # online argmax at next_obs is action 2; target net scores it 2
    agent = linear_agent([[0.0, 0.0, 0.0], [0.1, 0.2, 0.9]], gamma=0.99)
    agent.target_net.weights[0][:] = np.array([[0.0, 0.0], [0.0, 7.0], [0.0, 2.0]])
    t = Transition(np.array([1.0, 0.0]), 0, np.array([0.0, 1.0]), 1.0, False)
    assert agent.double_q_target(t) == pytest.approx(2.98, abs=1e-12)


def test_zero_nets_bootstrap_nothing():
    t = Transition(np.ones(3), 1, np.ones(3), 0.5, False)
    assert zero_agent().double_q_target(t) == 0.5


def test_target_uses_clipped_extrinsic_plus_intrinsic():
    t = Transition(np.ones(3), 1, np.ones(3), 4.0, True, intrinsic_reward=0.25)
    assert zero_agent().double_q_target(t) == 1.25


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(0, 5), st.integers(0, 2**32 - 1))
def test_terminal_target_property(r_ext, r_int, seed):
    agent = DqnAgent.create(3, 4, np.random.default_rng(seed), hidden=(5,))
    t = Transition(np.ones(3), 2, np.random.default_rng(seed).normal(size=3), r_ext, True, r_int)
    assert agent.double_q_target(t) == r_ext + r_int


def test_negative_intrinsic_rejected():
    with pytest.raises(InvalidInput):
        Transition(np.ones(2), 0, np.ones(2), 0.0, False, intrinsic_reward=-0.1)


# -- td update ----------------------------------------------------------------

def test_zero_residual_leaves_parameters_unchanged():
    agent = zero_agent()
    batch = Batch.from_transitions([Transition(np.ones(3), 1, np.ones(3), 0.0, False)] * 4)
    before = [p.copy() for p in agent.online_net.parameters()]
    assert agent.td_update(batch) == 0.0
    for p, q in zip(before, agent.online_net.parameters()):
        assert np.array_equal(p, q)


def test_td_seed_is_clamped():
    # one linear layer: dL/dW for the chosen action equals seed * obs
    agent = linear_agent([[0.0, 0.0]])
    captured = {}
    original = agent.online_net.backward

    def spy(x, seed, **kw):
        captured["seed"] = seed.copy()
        return original(x, seed, **kw)

    agent.online_net.backward = spy
    loss = agent.td_update(Batch.from_transitions([Transition(np.array([1.0]), 0, np.array([1.0]), 0.0, True,
                                                              intrinsic_reward=10.0)]))
    assert loss == 100.0
    assert captured["seed"][0, 0] == -1.0
    assert captured["seed"][0, 1] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_seed_magnitude_bounded_by_one(seed):
    rng = np.random.default_rng(seed)
    agent = DqnAgent.create(3, 2, rng, hidden=(4,))
    captured = []
    original = agent.online_net.backward
    agent.online_net.backward = lambda x, s, **kw: (captured.append(s.copy()), original(x, s, **kw))[1]
    ts = [Transition(rng.normal(size=3), int(rng.integers(2)), rng.normal(size=3), 1.0, bool(rng.integers(2)),
                     float(rng.uniform(0, 50))) for _ in range(5)]
    agent.td_update(Batch.from_transitions(ts))
    assert np.all(np.abs(captured[0]) * 5 <= 1.0 + 1e-12)


def test_single_transition_convergence():
    rng = np.random.default_rng(0)
    agent = DqnAgent.create(4, 2, rng)
    obs = rng.normal(size=4)
    batch = Batch.from_transitions([Transition(obs, 1, obs, 1.0, True)])
    for step in range(5000):
        agent.td_update(batch)
        if abs(agent.q_values(obs)[1] - 1.0) < 0.01:
            break
    assert abs(agent.q_values(obs)[1] - 1.0) < 0.01


def test_params_clamp_mode_runs():
    rng = np.random.default_rng(0)
    agent = DqnAgent.create(3, 2, rng, hidden=(4,), grad_clamp="params")
    loss = agent.td_update(Batch.from_transitions([Transition(np.ones(3), 0, np.ones(3), 1.0, True, 20.0)]))
    assert loss > 0 and agent.online_net.all_finite()


def test_non_finite_td_aborts():
    agent = zero_agent()
    with pytest.raises(NumericFault):
        agent.td_update(Batch.from_transitions([Transition(np.ones(3), 0, np.ones(3), np.nan, True)]))
    assert agent.td_updates == 0


# -- sync ---------------------------------------------------------------------

def test_sync_due_at_exactly_sync_period():
    rng = np.random.default_rng(0)
    agent = DqnAgent.create(2, 2, rng, hidden=(3,), sync_period=2000)
    batch = Batch.from_transitions([Transition(np.ones(2), 0, np.ones(2), 1.0, False)])
    for i in range(1, 2001):
        agent.td_update(batch)
        assert agent.sync_due == (i == 2000)
    agent.sync_target()
    assert agent.steps_since_sync == 0
    for a, b in zip(agent.online_net.parameters(), agent.target_net.parameters()):
        assert np.array_equal(a, b)
    agent.sync_target()
    for a, b in zip(agent.online_net.parameters(), agent.target_net.parameters()):
        assert np.array_equal(a, b)


def test_target_is_a_copy_not_an_alias():
    agent = DqnAgent.create(2, 2, np.random.default_rng(0), hidden=(3,))
    agent.sync_target()
    agent.online_net.weights[0][0, 0] += 1.0
    assert agent.target_net.weights[0][0, 0] != agent.online_net.weights[0][0, 0]


# -- replay -------------------------------------------------------------------

def test_default_capacity():
    assert ReplayBuffer().capacity == BUFFER_CAPACITY == 1_000_000


def test_ring_eviction():
    buf = ReplayBuffer(3)
    for i in range(4):
        buf.push(transition(i))
    assert len(buf) == 3
    assert [buf[j].obs[0] for j in range(3)] == [1.0, 2.0, 3.0]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 60))
def test_fifo_order(capacity, pushes):
    buf = ReplayBuffer(capacity)
    for i in range(pushes):
        buf.push(transition(i))
    assert len(buf) == min(pushes, capacity)
    expected = list(range(max(0, pushes - capacity), pushes))
    assert [int(buf[j].obs[0]) for j in range(len(buf))] == expected


def test_sample_membership_and_reproducibility():
    buf = ReplayBuffer(1000)
    for i in range(100):
        buf.push(transition(i))
    a = buf.sample(64, np.random.default_rng(4))
    b = buf.sample(64, np.random.default_rng(4))
    assert len(a) == 64
    assert np.array_equal(a.obs, b.obs)
    assert set(a.obs[:, 0].astype(int)) <= set(range(100))
    np.testing.assert_array_equal(a.next_obs[:, 0], a.obs[:, 0] + 0.5)


def test_undersized_sample_rejected():
    buf = ReplayBuffer(10)
    buf.push(transition(0))
    with pytest.raises(InvalidState):
        buf.sample(2, np.random.default_rng(0))


def test_buffer_grows_past_initial_allocation():
    buf = ReplayBuffer(5000)
    for i in range(3000):
        buf.push(transition(i))
    assert len(buf) == 3000
    assert buf[0].obs[0] == 0.0 and buf[-1].obs[0] == 2999.0


def test_greedy_rollout_reproducible():
    agent = DqnAgent.create(make_env("keydoor").obs_dim, 4, np.random.default_rng(3), epsilon=0.0)

    def rollout():
        env = make_env("keydoor", max_steps=60)
        obs, path = env.reset(), []
        while not env.done:
            obs, _, _ = env.step(agent.select_action(obs, np.random.default_rng()))
            path.append(env.pos)
        return path

    assert rollout() == rollout()

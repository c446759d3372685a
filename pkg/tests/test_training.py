import numpy as np
import pytest

from rsdqn import autograd as ag
from rsdqn.agents import AgentNet, Heads, epsilon_greedy
from rsdqn.attacks import AttackSpec
from rsdqn.envs import GridEnv
from rsdqn.errors import ConfigError
from rsdqn.nn import Adam
from rsdqn.replay import Batch, PrioritizedBuffer, Transition
from rsdqn.schedules import FULL_FRAMES, LAMBDA_PRESETS, Schedule, robust_epsilon_schedule
from rsdqn.training import (TrainConfig, Trainer, clip_reward, q_loss, q_update, run_training,
                            td_target)

from conftest import make_net, param_grad_error


class TableNet:
    """Returns fixed Q rows; the first state coordinate picks the row."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)

    def forward(self, x, mode="eval"):
        rows = np.asarray(x, dtype=np.float64)[:, 0].astype(int)
        return Heads(ag.Tensor(self.table[rows]), None, None)


def make_batch(next_rows, rewards, dones, n_dim=1, actions=None):
    n = len(rewards)
    next_states = np.zeros((n, n_dim))
    next_states[:, 0] = next_rows
    return Batch(states=np.zeros((n, n_dim)), actions=np.zeros(n, dtype=int) if actions is None
                 else np.asarray(actions), rewards=np.asarray(rewards, dtype=np.float64),
                 next_states=next_states, dones=np.asarray(dones, dtype=bool),
                 indices=np.arange(n), weights=np.ones(n))


def tiny(**kw):
    base = dict(env="catch", frames=400, learn_start=100, buffer_capacity=500, batch_size=8,
                target_sync=50, hidden=(16,), stream_hidden=8, egreedy_frames=200,
                validate_every=1)
    base.update(kw)
    return TrainConfig(**base)


# ------------------------------------------------------------- TD targets

def test_td_target_worked_examples():
    target = TableNet([[5.0, 2.0], [1.0, 3.0]])
    batch = make_batch([0, 0], rewards=[0.0, 0.7], dones=[False, True])
    y = td_target(batch, target, target, gamma=0.99, double=False)
    np.testing.assert_allclose(y, [4.95, 0.7])


def test_double_q_evaluates_online_choice_with_target():
    online = TableNet([[0.0, 9.0]])
    target = TableNet([[5.0, 2.0]])
    batch = make_batch([0], rewards=[1.0], dones=[False])
    assert td_target(batch, online, target, 0.5, double=True)[0] == pytest.approx(1.0 + 0.5 * 2.0)
    assert td_target(batch, online, target, 0.5, double=False)[0] == pytest.approx(1.0 + 0.5 * 5.0)


def test_clip_reward_is_sign():
    assert [clip_reward(r) for r in (-3.0, -0.2, 0.0, 0.1, 7.0)] == [-1.0, -1.0, 0.0, 1.0, 1.0]


def _real_batch(net, rng, n=5):
    states = rng.random((n, net.arch.input_dim))
    return Batch(states=states, actions=rng.integers(net.arch.n_actions, size=n),
                 rewards=rng.normal(size=n), next_states=rng.random((n, net.arch.input_dim)),
                 dones=rng.random(n) < 0.3, indices=np.arange(n), weights=rng.uniform(0.2, 1.0, n))


def test_q_loss_gradient_matches_finite_differences(rng):
    net = make_net(0, input_dim=4, hidden=(5,), stream_hidden=4)
    batch = _real_batch(net, rng)
    targets = rng.normal(size=len(batch))
    assert param_grad_error(net, lambda: q_loss(net, batch, targets)[0]) < 1e-4


def test_q_loss_is_weighted_mean_square(rng):
    net = make_net(1)
    batch = _real_batch(net, rng)
    targets = rng.normal(size=len(batch))
    loss, delta = q_loss(net, batch, targets)
    q = net.forward(batch.states).q.data[np.arange(len(batch)), batch.actions]
    np.testing.assert_allclose(delta, targets - q)
    assert loss.item() == pytest.approx(np.mean(batch.weights * (targets - q) ** 2))


def test_q_update_with_zero_td_error_leaves_parameters(rng):
    net = make_net(2)
    batch = _real_batch(net, rng)
    batch.dones[:] = True
    batch.rewards[:] = net.forward(batch.states).q.data[np.arange(len(batch)), batch.actions]
    before = net.params.flat.copy()
    td, loss = q_update(net, net.clone(), batch, Adam(net.params, 1e-3))
    assert loss == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_allclose(td, 0.0, atol=1e-12)
    np.testing.assert_array_equal(net.params.flat, before)


def test_q_update_reduces_loss_on_fixed_batch(rng):
    net = make_net(3)
    target = net.clone()
    batch = _real_batch(net, rng, n=16)
    opt = Adam(net.params, 1e-2)
    first = q_update(net, target, batch, opt, gamma=0.9)[1]
    for _ in range(50):
        td, last = q_update(net, target, batch, opt, gamma=0.9)
    assert last < first
    assert np.all(td >= 0)


# -------------------------------------------------------------- schedules

def test_schedule_shape():
    s = Schedule(1.0, 0.0, duration=100, delay=50)
    assert s(0) == s(50) == 1.0
    assert s(100) == pytest.approx(0.5)
    assert s(150) == s(10_000) == 0.0
    with pytest.raises(ValueError):
        Schedule(0, 1, -1)


def test_schedule_scaling_keeps_fractions():
    s = LAMBDA_PRESETS["anneal_to_zero"].scaled(200_000 / FULL_FRAMES)
    assert (s.delay, s.duration) == (25_000, 175_000)
    assert s(0) == 1.0 and s(200_000) == 0.0
    assert LAMBDA_PRESETS["anneal_to_half"](FULL_FRAMES) == 0.5
    e = robust_epsilon_schedule(1 / 255)
    assert e(0) == 0.0 and e(FULL_FRAMES) == pytest.approx(1 / 255)


# ------------------------------------------------------------------ config

@pytest.mark.parametrize("override", [
    dict(algorithm="ppo"), dict(defense="kl"), dict(frames=0), dict(gamma=1.5),
    dict(lambda_preset="cosine"), dict(batch_size=64, buffer_capacity=32),
    dict(env="pong"), dict(algorithm="rsdqn", defense="ce_duel", head="plain"),
    dict(kappa=0.5), dict(egreedy_end=2.0),
])
def test_invalid_train_configs(override):
    with pytest.raises(ConfigError):
        TrainConfig(**override).validate()


def test_train_config_round_trip():
    c = tiny(algorithm="rsdqn", train_attack=AttackSpec("training_pgd", 0.004, 1))
    again = TrainConfig(**{**c.to_dict(), "hidden": tuple(c.to_dict()["hidden"])})
    assert again == c


# ---------------------------------------------------------------- trainer

def test_no_updates_before_learn_start():
    t = Trainer(tiny(frames=100, learn_start=100))
    before = t.q.params.flat.copy()
    t.run()
    np.testing.assert_array_equal(t.q.params.flat, before)
    assert len(t.buffer) == 100


def test_target_network_lags_by_sync_interval(monkeypatch):
    t = Trainer(tiny(frames=130, target_sync=50, learn_start=20))
    seen = {}
    original = t.train_step

    def spy(frame):
        seen[frame] = t.q.params.flat.copy()
        return original(frame)

    monkeypatch.setattr(t, "train_step", spy)
    t.run()
    # sync happens before the update of frame 100
    np.testing.assert_array_equal(t.target.params.flat, seen[100])
    assert not np.array_equal(t.target.params.flat, t.q.params.flat)


def test_training_is_deterministic():
    a = run_training(tiny(algorithm="rsdqn", frames=250))
    b = run_training(tiny(algorithm="rsdqn", frames=250))
    assert a.metrics == b.metrics
    for k in a.nets:
        np.testing.assert_array_equal(a.nets[k].params.flat, b.nets[k].params.flat)
    c = run_training(tiny(algorithm="rsdqn", frames=250, seed=1))
    assert not np.array_equal(a.nets["q"].params.flat, c.nets["q"].params.flat)


def test_metrics_records():
    res = run_training(tiny(frames=400, learn_start=200))
    episodes = [m for m in res.metrics if m["type"] == "episode"]
    validations = [m for m in res.metrics if m["type"] == "validation"]
    assert len(episodes) == len(validations) >= 2
    assert episodes[-1]["q_loss"] is not None and episodes[0]["q_loss"] is None
    assert res.best_validation == max(v["score"] for v in validations)
    assert res.selected == "best_validation"
    assert "lambda" not in episodes[0]


def test_best_validation_weights_are_selected(monkeypatch):
    t = Trainer(tiny(frames=1000, learn_start=50, buffer_capacity=100))
    scores = iter([5.0, 9.0, 1.0, 9.0, 0.0, -3.0])
    snapshots = []
    original = t.validate_episode

    def scripted():
        original()
        snapshots.append(t.q.params.flat.copy())
        return next(scores)

    monkeypatch.setattr(t, "validate_episode", scripted)
    res = t.run()
    assert res.best_validation == 9.0
    # a tie keeps the later snapshot
    np.testing.assert_array_equal(res.nets["q"].params.flat, snapshots[3])
    np.testing.assert_array_equal(res.final_nets["q"].params.flat, t.q.params.flat)


def test_provable_run_keeps_final_weights_and_logs_schedules():
    res = run_training(tiny(algorithm="rsdqn", defense="provable", frames=400))
    episodes = [m for m in res.metrics if m["type"] == "episode"]
    assert res.selected == "final"
    assert all("lambda" in m and "robust_epsilon" in m for m in episodes)
    assert episodes[0]["lambda"] >= episodes[-1]["lambda"]
    np.testing.assert_array_equal(res.nets["student"].params.flat,
                                  res.final_nets["student"].params.flat)


def test_rsdqn_q_is_deterministic_and_student_noisy():
    t = Trainer(tiny(algorithm="rsdqn"))
    assert not t.q.arch.noisy and t.student.arch.noisy
    assert t.explorer is t.student
    assert TrainConfig(algorithm="rsdqn").deploy_key == "student"
    assert TrainConfig().deploy_key == "q"


def test_training_attack_is_applied_to_every_observation(monkeypatch):
    cfg = tiny(frames=200, learn_start=300, train_attack=AttackSpec("training_pgd", 0.004, 1))
    t = Trainer(cfg)
    calls = []

    def stub(spec, net, x, mode="explore"):
        calls.append((spec.kind, net))
        return x * 0.5

    t.attack = stub
    t.run()
    assert len(calls) == 200
    assert all(kind == "training_pgd" and net is t.q for kind, net in calls)
    buf = t.buffer
    # the last frame's transition is still waiting for its successor
    assert len(buf) == 199
    for i in range(len(buf) - 1):
        tr = buf.get(i)
        assert tr.state.max() <= 0.5
        # non-terminal successors are the attacked observation the agent saw next
        if not tr.done:
            assert tr.next_state.max() <= 0.5
            np.testing.assert_array_equal(tr.next_state, buf.get(i + 1).state)


# ------------------------------------------------------- reference trace

class ToyEnv(GridEnv):
    """2x2 single-pixel game: action 2 earns +3, anything else -0.5."""

    name = "toy"
    frame_shape = (2, 2)
    max_steps = 4

    def __init__(self):
        super().__init__()
        self.actions = []

    def _reset_game(self):
        self.pos = int(self.rng.integers(4))

    def _advance(self, action):
        self.actions.append(action)
        self.pos = (self.pos + action) % 4
        return 3.0 if action == 2 else -0.5

    def _render(self):
        f = np.zeros(4)
        f[self.pos] = 1.0
        return f.reshape(2, 2)


def reference_dqn(cfg: TrainConfig, env: ToyEnv):
    """Plain DQN loop written out step by step, sharing only the building blocks."""
    init_rng, explore_rng, _, replay_rng, env_rng, _ = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(6))
    q = AgentNet(cfg.architecture(env, noisy=False), init_rng)
    target = q.clone()
    opt = Adam(q.params, cfg.lr_q, cfg.adam_eps)
    buf = PrioritizedBuffer(cfg.buffer_capacity, cfg.priority_alpha, cfg.priority_beta)
    obs = env.reset(int(env_rng.integers(2**31)))
    for frame in range(cfg.frames):
        eps = max(0.0, 1.0 - frame / cfg.egreedy_frames)  # 1 -> 0 linearly
        x = obs.reshape(-1)
        a = epsilon_greedy(q, x, eps, explore_rng, mode="explore")
        obs, r, done = env.step(a)
        buf.push(Transition(x, a, float(np.sign(r)), obs.reshape(-1), done))
        if frame % cfg.target_sync == 0:
            target.load_state_dict(q.state_dict())
        if frame >= cfg.learn_start and len(buf) >= cfg.batch_size:
            batch = buf.sample(cfg.batch_size, replay_rng)
            td, _ = q_update(q, target, batch, opt, cfg.gamma, cfg.double_q)
            buf.update_priorities(batch.indices, td)
        if done:
            obs = env.reset(int(env_rng.integers(2**31)))
    return q, target, env.actions


def test_ten_frame_trace_matches_reference_loop():
    cfg = TrainConfig(env="catch", frames=10, learn_start=3, batch_size=2, buffer_capacity=16,
                      target_sync=4, hidden=(5,), stream_hidden=3, noisy=False,
                      egreedy_frames=8, validate_every=100, lr_q=1e-2)
    trainer = Trainer(cfg, env=ToyEnv())
    trainer.run()
    q, target, actions = reference_dqn(cfg, ToyEnv())
    assert trainer.env.actions == actions
    assert len(set(actions)) > 1
    np.testing.assert_array_equal(trainer.q.params.flat, q.params.flat)
    np.testing.assert_array_equal(trainer.target.params.flat, target.params.flat)
    assert not np.array_equal(q.params.flat, AgentNet(q.arch, np.random.default_rng(0)).params.flat)

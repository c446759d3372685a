import numpy as np
import pytest

from rsdqn.envs import ENVS, Catch, Crossing, FrameStack, make_env, run_scripted
from rsdqn.errors import StateError


@pytest.fixture(params=sorted(ENVS))
def env(request):
    return make_env(request.param)


def random_episode(env, seed):
    r = np.random.default_rng(seed + 99)
    env.reset(seed)
    rewards = []
    while not env.done:
        _, rew, _ = env.step(int(r.integers(env.n_actions)))
        rewards.append(rew)
    return env.score, rewards


def test_reset_is_seeded(env):
    a = env.reset(3)
    b = make_env(env.name).reset(3)
    np.testing.assert_array_equal(a, b)


def test_observation_range_and_shape(env):
    obs = env.reset(0)
    assert obs.shape == (4, *env.frame_shape) == env.observation_shape
    assert obs.min() >= 0.0 and obs.max() <= 1.0
    for _ in range(30):
        obs, _, _ = env.step(1)
        assert obs.min() >= 0.0 and obs.max() <= 1.0


def test_grid_sizes():
    assert Catch.frame_shape == (10, 10)
    assert Crossing.frame_shape == (12, 12)


def test_reset_fills_frame_stack(env):
    obs = env.reset(1)
    for k in range(1, 4):
        np.testing.assert_array_equal(obs[k], obs[0])


def test_frame_stack_shifts_in_newest():
    fs = FrameStack(4)
    fs.reset(np.zeros((2, 2)))
    obs = fs.push(np.ones((2, 2)))
    assert obs[-1].sum() == 4 and obs[:3].sum() == 0
    obs = fs.push(2 * np.ones((2, 2)))
    assert obs[-1].max() == 2 and obs[-2].max() == 1


def test_step_errors(env):
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(env.n_actions)
    with pytest.raises(ValueError):
        env.step(-1)
    while not env.done:
        env.step(0)
    with pytest.raises(StateError):
        env.step(0)


def test_trajectory_is_deterministic(env):
    actions = np.random.default_rng(5).integers(env.n_actions, size=120)

    def roll():
        frames = [env.reset(11)]
        for a in actions:
            if env.done:
                break
            frames.append(env.step(int(a))[0])
        return np.stack(frames), env.score

    first, s1 = roll()
    second, s2 = roll()
    assert first.tobytes() == second.tobytes() and s1 == s2


def test_episode_length_and_score_bookkeeping(env):
    score, rewards = random_episode(env, 2)
    assert env.t <= env.max_steps and env.done
    assert score == sum(rewards)
    assert all(abs(r) <= env.reward_bound for r in rewards)
    stats = env.stats()
    assert stats.score == score and stats.steps == env.t and stats.seed == 2


def test_catch_scripted_catches_everything():
    for seed in range(5):
        assert run_scripted(Catch(), seed).score == Catch.drops


def test_catch_episode_has_twenty_drops():
    env = Catch()
    env.reset(0)
    rewards = []
    while not env.done:
        rewards.append(env.step(1)[1])
    assert sum(r != 0 for r in rewards) == 20 and len(rewards) == 180


def test_crossing_scripted_policy_scores_at_least_ten():
    scores = [run_scripted(Crossing(), seed).score for seed in range(3)]
    assert min(scores) >= 10


def test_random_policy_below_scripted(env):
    random_mean = np.mean([random_episode(env, s)[0] for s in range(100)])
    scripted_mean = np.mean([run_scripted(make_env(env.name), s).score for s in range(5)])
    assert random_mean < scripted_mean


def test_unknown_env():
    with pytest.raises(ValueError):
        make_env("pong")

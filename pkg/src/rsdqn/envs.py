"""Pixel-grid games with frame stacking.

Two small games stand in for Atari titles. Observations are grayscale
frames with intensities in [0, 1]; the agent sees the last four frames.

Catch (10x10)
    A pixel falls one row per step from a random column of the top row.
    The agent's paddle sits on the bottom row and moves left, stays, or
    moves right. Reward +1 on a catch, -1 on a miss. 20 drops per episode
    (180 steps).

Crossing (12x12)
    The agent starts on the bottom row of a fixed column and moves up,
    stays, or moves down across ten lanes of wrapping two-cell cars. Being
    hit knocks the agent back one row. Reaching the top row scores +1 and
    restarts the crossing. 500 steps per episode.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StateError

STACK = 4


@dataclass
class EpisodeStats:
    score: float
    steps: int
    seed: int


class FrameStack:
    """Ring of the last ``size`` frames, oldest first."""

    def __init__(self, size: int = STACK):
        self.size = size
        self.frames: deque[np.ndarray] = deque(maxlen=size)

    def reset(self, frame: np.ndarray) -> np.ndarray:
        self.frames.clear()
        for _ in range(self.size):
            self.frames.append(frame)
        return self.observation()

    def push(self, frame: np.ndarray) -> np.ndarray:
        self.frames.append(frame)
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.stack(self.frames)


class GridEnv:
    """Shared reset/step bookkeeping; subclasses supply the game rules."""

    name = "grid"
    n_actions = 3
    frame_shape: tuple[int, int] = (0, 0)
    max_steps = 0
    reward_bound = 1.0

    def __init__(self):
        self.stack = FrameStack()
        self.rng: np.random.Generator | None = None
        self.done = True
        self.t = 0
        self.score = 0.0
        self.seed: int | None = None

    @property
    def observation_shape(self) -> tuple[int, ...]:
        return (STACK, *self.frame_shape)

    @property
    def observation_size(self) -> int:
        return int(np.prod(self.observation_shape))

    def reset(self, seed: int) -> np.ndarray:
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.done = False
        self.t = 0
        self.score = 0.0
        self._reset_game()
        return self.stack.reset(self._render())

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise StateError("step() after the episode ended; call reset()")
        if not 0 <= int(action) < self.n_actions:
            raise ValueError(f"action {action} outside [0, {self.n_actions})")
        reward = float(self._advance(int(action)))
        self.t += 1
        self.score += reward
        if self.t >= self.max_steps or self._finished():
            self.done = True
        return self.stack.push(self._render()), reward, self.done

    def stats(self) -> EpisodeStats:
        return EpisodeStats(self.score, self.t, self.seed)

    def _reset_game(self) -> None:
        raise NotImplementedError

    def _advance(self, action: int) -> float:
        raise NotImplementedError

    def _finished(self) -> bool:
        return False

    def _render(self) -> np.ndarray:
        raise NotImplementedError

    def scripted_action(self) -> int:
        """Action of a hand-written near-optimal policy in the current state."""
        raise NotImplementedError


class Catch(GridEnv):
    name = "catch"
    frame_shape = (10, 10)
    drops = 20
    max_steps = 20 * 9
    # actions: 0 left, 1 stay, 2 right

    def __init__(self, paddle_width: int = 1):
        super().__init__()
        self.paddle_width = paddle_width

    def _reset_game(self) -> None:
        h, w = self.frame_shape
        self.paddle = (w - self.paddle_width) // 2
        self.dropped = 0
        self._spawn()

    def _spawn(self) -> None:
        self.ball_row = 0
        self.ball_col = int(self.rng.integers(self.frame_shape[1]))

    def _advance(self, action: int) -> float:
        h, w = self.frame_shape
        self.paddle = int(np.clip(self.paddle + action - 1, 0, w - self.paddle_width))
        self.ball_row += 1
        if self.ball_row < h - 1:
            return 0.0
        caught = self.paddle <= self.ball_col < self.paddle + self.paddle_width
        self.dropped += 1
        if self.dropped < self.drops:
            self._spawn()
        return 1.0 if caught else -1.0

    def _finished(self) -> bool:
        return self.dropped >= self.drops

    def _render(self) -> np.ndarray:
        h, w = self.frame_shape
        f = np.zeros((h, w))
        f[h - 1, self.paddle:self.paddle + self.paddle_width] = 1.0
        if self.dropped < self.drops:
            f[self.ball_row, self.ball_col] = 1.0
        return f

    def scripted_action(self) -> int:
        center = self.paddle + (self.paddle_width - 1) / 2
        if self.ball_col < center - 0.5 * (self.paddle_width - 1):
            return 0
        if self.ball_col > center + 0.5 * (self.paddle_width - 1):
            return 2
        return 1


class Crossing(GridEnv):
    name = "crossing"
    frame_shape = (12, 12)
    max_steps = 500
    column = 5
    car_length = 2
    car_value = 0.5
    # actions: 0 stay, 1 up, 2 down

    def _reset_game(self) -> None:
        h, w = self.frame_shape
        lanes = h - 2
        self.periods = self.rng.integers(1, 5, size=lanes)
        self.directions = np.where(np.arange(lanes) % 2 == 0, 1, -1)
        self.car_pos = self.rng.integers(w, size=lanes)
        self.row = h - 1

    def _cars_at(self, t: int) -> np.ndarray:
        """Leftmost car cell of each lane after ``t`` steps from reset."""
        w = self.frame_shape[1]
        moved = (t // self.periods) * self.directions
        return (self.car_pos + moved) % w

    def _occupied(self, row: int, cars: np.ndarray) -> bool:
        h, w = self.frame_shape
        if not 1 <= row <= h - 2:
            return False
        start = cars[row - 1]
        return (self.column - start) % w < self.car_length

    def _advance(self, action: int) -> float:
        h = self.frame_shape[0]
        self.row = self._next_row(self.row, action, self._cars_at(self.t + 1))
        if self.row == 0:
            self.row = h - 1
            return 1.0
        return 0.0

    def _render(self) -> np.ndarray:
        h, w = self.frame_shape
        f = np.zeros((h, w))
        cars = self._cars_at(self.t)
        for lane, start in enumerate(cars):
            for k in range(self.car_length):
                f[lane + 1, (start + k) % w] = self.car_value
        f[self.row, self.column] = 1.0
        return f

    def _next_row(self, row: int, action: int, cars: np.ndarray) -> int:
        h = self.frame_shape[0]
        row = int(np.clip(row + {0: 0, 1: -1, 2: 1}[action], 0, h - 1))
        if self._occupied(row, cars):
            row = min(row + 1, h - 1)
        return row

    def scripted_action(self, horizon: int = 60) -> int:
        # Car motion ignores the agent, so a breadth-first search over
        # (row, time) finds the fastest way to the top row.
        frontier = {self.row: None}
        for k in range(1, horizon + 1):
            cars = self._cars_at(self.t + k)
            nxt: dict[int, int] = {}
            for row, first in frontier.items():
                for action in (1, 0, 2):
                    r = self._next_row(row, action, cars)
                    a = action if first is None else first
                    if r == 0:
                        return a
                    nxt.setdefault(r, a)
            frontier = nxt
        return 1


ENVS = {"catch": Catch, "crossing": Crossing}


def make_env(name: str) -> GridEnv:
    try:
        return ENVS[name]()
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None


def run_scripted(env: GridEnv, seed: int) -> EpisodeStats:
    env.reset(seed)
    while not env.done:
        env.step(env.scripted_action())
    return env.stats()

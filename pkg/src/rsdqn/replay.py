"""Proportional prioritized experience replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StateError
from .sumtree import SumTree

PRIORITY_FLOOR = 1e-6


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


class PrioritizedBuffer:
    """Ring buffer sampled with probability ``p_i**alpha / sum_j p_j**alpha``.

    New transitions enter with the current maximum priority (1.0 when the
    buffer is empty). Importance weights ``(N * P(i)) ** -beta`` are divided
    by their largest possible value, so they never exceed 1 and equal 1 for
    the least likely item.
    """

    def __init__(self, capacity: int = 200_000, alpha: float = 0.5, beta: float = 0.5,
                 backend: str | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.tree = SumTree(capacity, backend)
        self._priority = np.zeros(capacity)
        self._next = 0
        self._size = 0
        self._states: np.ndarray | None = None

    def __len__(self) -> int:
        return self._size

    @property
    def priorities(self) -> np.ndarray:
        return self._priority[: self._size].copy()

    def _allocate(self, state: np.ndarray) -> None:
        shape = (self.capacity, *state.shape)
        self._states = np.zeros(shape)
        self._next_states = np.zeros(shape)
        self._actions = np.zeros(self.capacity, dtype=np.int64)
        self._rewards = np.zeros(self.capacity)
        self._dones = np.zeros(self.capacity, dtype=bool)

    def push(self, t: Transition) -> int:
        """Store ``t``, evicting the oldest item when full; returns its slot."""
        state = np.asarray(t.state, dtype=np.float64)
        if t.reward not in (-1.0, 0.0, 1.0):
            raise ValueError(f"reward must be clipped to {{-1, 0, 1}}, got {t.reward}")
        if self._states is None:
            self._allocate(state)
        i = self._next
        self._states[i] = state
        self._next_states[i] = t.next_state
        self._actions[i] = t.action
        self._rewards[i] = t.reward
        self._dones[i] = t.done
        p = self.tree.max() ** (1.0 / self.alpha) if self._size else 1.0
        self._set(np.array([i]), np.array([p]))
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        return i

    def _set(self, index: np.ndarray, priority: np.ndarray) -> None:
        self._priority[index] = priority
        self.tree.update(index, priority**self.alpha)

    def get(self, index: int) -> Transition:
        if not 0 <= index < self._size:
            raise IndexError(index)
        return Transition(self._states[index].copy(), int(self._actions[index]),
                          float(self._rewards[index]), self._next_states[index].copy(),
                          bool(self._dones[index]))

    def probabilities(self) -> np.ndarray:
        w = self._priority[: self._size] ** self.alpha
        return w / w.sum()

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size < batch_size or batch_size < 1:
            raise StateError(f"cannot sample {batch_size} from a buffer holding {self._size}")
        total = self.tree.total()
        idx = self.tree.find(rng.random(batch_size) * total)
        np.minimum(idx, self._size - 1, out=idx)
        probs = self.tree.leaves(idx) / total
        p_min = self._priority[: self._size].min() ** self.alpha / total
        weights = (probs / p_min) ** (-self.beta)
        return Batch(
            states=self._states[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            next_states=self._next_states[idx],
            dones=self._dones[idx],
            indices=idx,
            weights=weights,
        )

    def update_priorities(self, indices, td_errors) -> None:
        """Set ``p_i = |delta_i| + 1e-6``.

        Indices refer to slots, so an index whose transition has since been
        evicted updates whichever transition now occupies that slot.
        """
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self._size):
            raise IndexError(f"priority index out of range [0, {self._size})")
        self._set(indices, np.abs(np.asarray(td_errors, dtype=np.float64)) + PRIORITY_FLOOR)

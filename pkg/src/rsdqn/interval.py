"""Interval (box) abstract domain over dense ReLU networks.

Boxes are propagated with the center/half-width rule for affine layers and
component-wise for ReLU, which is sound: every concrete output of a point
in the input box lies inside the output box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .agents import AgentNet
from .autograd import Tensor
from .errors import DimensionError

OBS_RANGE = (0.0, 1.0)


@dataclass(frozen=True)
class IntervalActivation:
    lower: Tensor
    upper: Tensor

    def __post_init__(self):
        if self.lower.shape != self.upper.shape:
            raise DimensionError(f"bounds of shapes {self.lower.shape} and {self.upper.shape}")

    @property
    def width(self) -> np.ndarray:
        return self.upper.data - self.lower.data


@dataclass(frozen=True)
class CertResult:
    certified: bool
    action: int
    epsilon: float


def box_around(state, epsilon: float, clip: tuple[float, float] | None = OBS_RANGE) -> IntervalActivation:
    """L-infinity ball of radius ``epsilon`` around ``state``, clipped to ``clip``."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    s = np.asarray(state, dtype=np.float64)
    lo, hi = s - epsilon, s + epsilon
    if clip is not None:
        lo, hi = np.clip(lo, *clip), np.clip(hi, *clip)
    return IntervalActivation(Tensor(lo), Tensor(hi))


def _layers_of(net, mode: str) -> Sequence[tuple]:
    if isinstance(net, AgentNet):
        return net.advantage_layers(mode)
    return [(ag.as_tensor(w), ag.as_tensor(b)) for w, b in net]


def propagate(net, box: IntervalActivation, mode: str = "eval") -> IntervalActivation:
    """Push a box through ``net``'s input -> advantage path (ReLU between layers).

    ``net`` is an :class:`AgentNet` or a sequence of ``(W, b)`` pairs. The
    result is differentiable in the network parameters when they require
    gradients.
    """
    layers = _layers_of(net, mode)
    lower, upper = box.lower, box.upper
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        if lower.shape[-1] != w.shape[1]:
            raise DimensionError(f"box width {lower.shape[-1]} != layer input {w.shape[1]}")
        center = ag.mul(ag.add(lower, upper), 0.5)
        half = ag.mul(ag.sub(upper, lower), 0.5)
        slack = _rounding_slack(w.data, b.data, center.data, half.data)
        center = ag.affine(center, w, b)
        half = ag.add(ag.affine(half, ag.absolute(w), np.zeros(w.shape[0])), slack)
        lower, upper = ag.sub(center, half), ag.add(center, half)
        if i < last:
            lower, upper = ag.relu(lower), ag.relu(upper)
    return IntervalActivation(lower, upper)


def _rounding_slack(w: np.ndarray, b: np.ndarray, center: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Bound on float64 rounding in ``W x + b`` for any ``x`` in the box.

    Uses the dot-product error bound ``gamma_n (|W| |x| + |b|)``, counted
    twice (once for our bounds, once for the concrete evaluation we must
    contain). Kept out of the autograd graph; its gradient is ~1e-16.
    """
    n = w.shape[1] + 2
    gamma = 2.0 * n * 2.0**-53 / (1.0 - n * 2.0**-53)
    return gamma * ((np.abs(center) + half) @ np.abs(w).T + np.abs(b))


def worst_case_logits(g: IntervalActivation, target) -> Tensor:
    """Lower bound at the target action, upper bound everywhere else."""
    n = g.lower.shape[-1]
    target = np.asarray(target, dtype=np.int64)
    if np.any(target < 0) or np.any(target >= n):
        raise IndexError(f"target {target} out of range for {n} actions")
    onehot = np.eye(n)[target]
    return ag.add(ag.mul(g.lower, onehot), ag.mul(g.upper, 1.0 - onehot))


def interval_loss(g: IntervalActivation, target) -> Tensor:
    """Cross-entropy of the worst-case logit vector inside ``g``."""
    return ag.cross_entropy(worst_case_logits(g, target), target)


def _greedy(net, state: np.ndarray, mode: str) -> np.ndarray:
    with ag.no_grad():
        h = ag.Tensor(state)
        layers = _layers_of(net, mode)
        for i, (w, b) in enumerate(layers):
            h = ag.affine(h, w, b)
            if i < len(layers) - 1:
                h = ag.relu(h)
    return np.argmax(h.data, axis=-1)


def _certified(net, states: np.ndarray, actions: np.ndarray, eps: np.ndarray,
               clip, mode: str) -> np.ndarray:
    with ag.no_grad():
        g = propagate(net, box_around_batch(states, eps, clip), mode)
    lo, up = g.lower.data, g.upper.data
    rows = np.arange(len(actions))
    others = up.copy()
    others[rows, actions] = -np.inf
    return lo[rows, actions] > others.max(axis=1)


def box_around_batch(states: np.ndarray, eps: np.ndarray, clip) -> IntervalActivation:
    eps = np.asarray(eps, dtype=np.float64)
    if np.any(eps < 0):
        raise ValueError("epsilon must be non-negative")
    e = eps.reshape(-1, *([1] * (states.ndim - 1)))
    lo, hi = states - e, states + e
    if clip is not None:
        lo, hi = np.clip(lo, *clip), np.clip(hi, *clip)
    return IntervalActivation(Tensor(lo), Tensor(hi))


def certify_action(net, state, epsilon: float, clip=OBS_RANGE, mode: str = "eval") -> CertResult:
    """Check that the greedy advantage action cannot change inside the ball.

    Only a strict gap between the action's lower bound and every other
    upper bound counts; ties are reported as not certified.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    s = np.asarray(state, dtype=np.float64)[None]
    t = _greedy(net, s, mode)
    ok = _certified(net, s, t, np.array([epsilon]), clip, mode)
    return CertResult(bool(ok[0]), int(t[0]), float(epsilon))


def bisect_radius(predicate: Callable[[float], bool], iterations: int = 20,
                  low: float = 0.0, high: float = 1.0) -> float:
    """Largest radius found by bisection for a monotone ``predicate``.

    Returns ``low`` if the predicate never holds. Exactly ``iterations``
    predicate calls are made.
    """
    for _ in range(iterations):
        mid = 0.5 * (low + high)
        if predicate(mid):
            low = mid
        else:
            high = mid
    return low


def epsilon_max_batch(net, states, iterations: int = 20, clip=OBS_RANGE,
                      mode: str = "eval") -> np.ndarray:
    """Vectorised :func:`epsilon_max` over a batch of states."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[None]
    t = _greedy(net, s, mode)
    low = np.zeros(len(s))
    high = np.ones(len(s))
    for _ in range(iterations):
        mid = 0.5 * (low + high)
        ok = _certified(net, s, t, mid, clip, mode)
        low = np.where(ok, mid, low)
        high = np.where(ok, high, mid)
    return low


def epsilon_max(net, state, iterations: int = 20, clip=OBS_RANGE, mode: str = "eval") -> float:
    """Largest certified radius in [0, 1] found by 20-step bisection."""
    return float(epsilon_max_batch(net, np.asarray(state)[None], iterations, clip, mode)[0])

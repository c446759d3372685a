"""Gradient-sign observation attacks against a Q or student network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .agents import AgentNet, greedy_action
from .errors import ConfigError

OBS_LOW, OBS_HIGH = 0.0, 1.0
KINDS = ("none", "fgsm", "pgd", "training_pgd")


@dataclass(frozen=True)
class AttackSpec:
    """Which attack to run and how strong it is.

    ``training_pgd`` is PGD with the gradient sign flipped, so it reinforces
    the agent's current choice instead of pushing it away.
    """

    kind: str = "none"
    epsilon: float = 0.004
    steps: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"attack kind must be one of {KINDS}, got {self.kind!r}")
        if self.epsilon < 0:
            raise ConfigError(f"attack epsilon must be >= 0, got {self.epsilon}")
        if self.steps < 1:
            raise ConfigError(f"attack steps must be >= 1, got {self.steps}")

    @property
    def sign(self) -> int:
        return -1 if self.kind == "training_pgd" else 1

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "fgsm":
            return f"FGSM(eps={self.epsilon:g})"
        prefix = "TrainingPGD" if self.kind == "training_pgd" else "TestPGD"
        return f"{prefix}(k={self.steps})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "epsilon": self.epsilon, "steps": self.steps}


def input_gradient(net: AgentNet, state: np.ndarray, label, mode: str = "explore") -> np.ndarray:
    """Gradient of softmax cross-entropy of ``net``'s Q-values w.r.t. the input."""
    x = ag.Tensor(np.asarray(state, dtype=np.float64), requires_grad=True)
    with net.params.detached():
        q = net.forward(x, mode).q
        ag.cross_entropy(q, label).backward()
    return x.grad


def fgsm(net: AgentNet, state, label, epsilon: float, sign: int = 1,
         mode: str = "explore") -> np.ndarray:
    """``clip(s + sign * eps * sign(grad CE), 0, 1)``; zero gradients move nothing."""
    s = np.asarray(state, dtype=np.float64)
    if epsilon == 0:
        return s.copy()
    g = input_gradient(net, s, label, mode)
    return np.clip(s + sign * epsilon * np.sign(g), OBS_LOW, OBS_HIGH)


def pgd(net: AgentNet, state, label, epsilon: float, steps: int = 1, sign: int = 1,
        mode: str = "explore") -> np.ndarray:
    """``steps`` FGSM moves of size ``eps / steps``, each projected back onto the ball."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    s = np.asarray(state, dtype=np.float64)
    if epsilon == 0:
        return s.copy()
    lo = np.maximum(s - epsilon, OBS_LOW)
    hi = np.minimum(s + epsilon, OBS_HIGH)
    x = s
    step = epsilon / steps
    for _ in range(steps):
        x = fgsm(net, x, label, step, sign, mode)
        x = np.clip(x, lo, hi)
    return x


def perturb_for_agent(spec: AttackSpec, net: AgentNet, state, mode: str = "explore") -> np.ndarray:
    """Attack ``state`` using ``net``'s own greedy action on it as the label."""
    s = np.asarray(state, dtype=np.float64)
    if spec.kind == "none" or spec.epsilon == 0:
        return s
    label = greedy_action(net, s, mode)
    steps = 1 if spec.kind == "fgsm" else spec.steps
    return pgd(net, s, label, spec.epsilon, steps, spec.sign, mode)

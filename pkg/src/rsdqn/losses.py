"""Distillation losses that train the student from the Q network.

All losses average over the batch. Squared-error terms use the mean over
elements rather than the plain sum of squares; the constant factor is
absorbed by the learning rate.

The teacher's target action is always computed on the clean states. For
dueling teachers it is the argmax of the advantage stream, which equals the
argmax of the combined Q-values.

``hybrid`` applies the cross-entropy to the student's combined Q output.
Softmax is shift invariant and the dueling combination only shifts all
advantages by the same amount, so ``hybrid`` and ``ce_duel`` produce the
same value and gradients; both are kept because both are named options.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .agents import AgentNet
from .attacks import AttackSpec, pgd
from .autograd import Tensor
from .errors import ConfigError
from .interval import box_around, interval_loss, propagate

LOSS_KINDS = ("mse", "ce", "ce_duel", "hybrid", "ce_def", "ce_duel_def", "provable")
DUELING_KINDS = ("ce_duel", "hybrid", "ce_duel_def", "provable")
DEFENDED_KINDS = ("ce_def", "ce_duel_def")


@dataclass
class DistillContext:
    """Per-update inputs for defended losses.

    ``attack`` drives the adversarial kinds. ``lam`` (weight on the plain
    cross-entropy) and ``epsilon`` (box radius) drive ``provable`` and are
    normally read off schedules at the current frame.
    """

    attack: AttackSpec = field(default_factory=lambda: AttackSpec("pgd", 0.004, 1))
    lam: float = 1.0
    epsilon: float = 0.0
    lambda_d: float = 1.0
    mode: str = "train"


def check_kind(kind: str, q_net: AgentNet, s_net: AgentNet) -> None:
    if kind not in LOSS_KINDS:
        raise ConfigError(f"unknown distillation loss {kind!r}; choose from {LOSS_KINDS}")
    if kind in DUELING_KINDS and not (q_net.dueling and s_net.dueling):
        raise ConfigError(f"loss {kind!r} needs dueling heads on both Q and student")
    if q_net.arch.n_actions != s_net.arch.n_actions:
        raise ConfigError("Q and student disagree on the number of actions")


def teacher_targets(q_net: AgentNet, states: np.ndarray):
    with ag.no_grad():
        heads = q_net.forward(states, "eval")
    scores = heads.advantage.data if heads.advantage is not None else heads.q.data
    return heads, np.argmax(scores, axis=-1)


def distill_loss(kind: str, states, q_net: AgentNet, s_net: AgentNet,
                 ctx: DistillContext | None = None) -> Tensor:
    """Scalar loss for one batch of states; differentiable in the student only."""
    check_kind(kind, q_net, s_net)
    ctx = ctx or DistillContext()
    states = np.asarray(states, dtype=np.float64)
    teacher, target = teacher_targets(q_net, states)
    mode = ctx.mode

    if kind == "mse":
        return ag.mse(s_net.forward(states, mode).q, teacher.q.data)
    if kind == "ce":
        return ag.cross_entropy(s_net.forward(states, mode).q, target)
    if kind in ("ce_duel", "hybrid"):
        student = s_net.forward(states, mode)
        logits = student.advantage if kind == "ce_duel" else student.q
        return ag.add(ag.cross_entropy(logits, target), ag.mse(student.value, teacher.value.data))

    if kind in DEFENDED_KINDS:
        s_adv = adversarial_states(s_net, states, ctx.attack, mode)
        student = s_net.forward(s_adv, mode)
        if kind == "ce_def":
            return ag.cross_entropy(student.q, target)
        return ag.add(ag.cross_entropy(student.advantage, target),
                      ag.mse(student.value, teacher.value.data))

    # provable
    student = s_net.forward(states, mode)
    value_term = ag.mse(student.value, teacher.value.data)
    ce = ag.cross_entropy(student.advantage, target)
    mix = ag.mul(ce, ctx.lam)
    if ctx.lam < 1.0:
        g = propagate(s_net, box_around(states, ctx.epsilon), mode)
        mix = ag.add(mix, ag.mul(interval_loss(g, target), 1.0 - ctx.lam))
    return ag.add(value_term, ag.mul(mix, ctx.lambda_d))


def adversarial_states(s_net: AgentNet, states: np.ndarray, attack: AttackSpec,
                       mode: str = "train") -> np.ndarray:
    """PGD states against the student's own greedy actions, treated as constants."""
    if attack.kind == "none" or attack.epsilon == 0:
        return states
    with ag.no_grad():
        heads = s_net.forward(states, mode)
    labels = np.argmax(heads.q.data, axis=-1)
    steps = 1 if attack.kind == "fgsm" else attack.steps
    return pgd(s_net, states, labels, attack.epsilon, steps, attack.sign, mode)

"""DQN and robust-student DQN training loops."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autograd as ag
from .agents import AgentNet, Architecture, epsilon_greedy
from .attacks import AttackSpec, perturb_for_agent
from .envs import GridEnv, make_env
from .errors import ConfigError
from .losses import DUELING_KINDS, LOSS_KINDS, DistillContext, check_kind, distill_loss
from .nn import Adam
from .replay import Batch, PrioritizedBuffer, Transition
from .schedules import FULL_FRAMES, LAMBDA_PRESETS, Schedule, robust_epsilon_schedule

log = logging.getLogger(__name__)

ALGORITHMS = ("dqn", "rsdqn")


@dataclass
class TrainConfig:
    """Training hyperparameters.

    Defaults are the full-length values with the frame budget, warm-up and
    replay size cut to 1/20 for desk-scale runs. The interval-training
    schedules are defined over the full 4M-frame budget and stretched to
    ``frames``.
    """

    env: str = "catch"
    algorithm: str = "dqn"
    defense: str = "ce_duel"
    seed: int = 0
    frames: int = 200_000
    learn_start: int = 4_000
    gamma: float = 0.99
    lr_q: float = 1e-4
    lr_s: float = 2e-4
    adam_eps: float = 1.5e-4
    batch_size: int = 32
    target_sync: int = 2_000
    buffer_capacity: int = 10_000
    priority_alpha: float = 0.5
    priority_beta: float = 0.5
    double_q: bool = True
    clip_reward: bool = True
    noisy: bool = True
    kappa: float = 4.0
    head: str = "dueling"
    hidden: tuple = (128,)
    stream_hidden: int = 64
    egreedy_start: float = 1.0
    egreedy_end: float = 0.0
    egreedy_frames: int = 20_000
    lambda_d: float = 1.0
    lambda_preset: str = "anneal_to_zero"
    robust_epsilon: float = 1.0 / 255.0
    defense_attack: AttackSpec = field(default_factory=lambda: AttackSpec("pgd", 0.004, 1))
    train_attack: AttackSpec = field(default_factory=AttackSpec)
    validate_every: int = 10
    validation_epsilon: float = 0.005

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if isinstance(self.defense_attack, dict):
            self.defense_attack = AttackSpec(**self.defense_attack)
        if isinstance(self.train_attack, dict):
            self.train_attack = AttackSpec(**self.train_attack)

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.defense not in LOSS_KINDS:
            raise ConfigError(f"defense must be one of {LOSS_KINDS}, got {self.defense!r}")
        if self.algorithm == "rsdqn" and self.defense in DUELING_KINDS and self.head != "dueling":
            raise ConfigError(f"defense {self.defense!r} needs head = 'dueling'")
        for name in ("lr_q", "lr_s", "adam_eps", "gamma", "kappa"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        for name in ("frames", "batch_size", "target_sync", "buffer_capacity", "validate_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.learn_start < 0 or self.egreedy_frames < 0:
            raise ConfigError("learn_start and egreedy_frames must be >= 0")
        if self.kappa < 1:
            raise ConfigError("kappa must be >= 1")
        if self.lambda_preset not in LAMBDA_PRESETS:
            raise ConfigError(f"lambda_preset must be one of {sorted(LAMBDA_PRESETS)}")
        if self.robust_epsilon < 0:
            raise ConfigError("robust_epsilon must be >= 0")
        if not 0 <= self.validation_epsilon <= 1:
            raise ConfigError("validation_epsilon must lie in [0, 1]")
        for name in ("egreedy_start", "egreedy_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.batch_size > self.buffer_capacity:
            raise ConfigError("batch_size exceeds buffer_capacity")
        make_env(self.env)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @property
    def deploy_key(self) -> str:
        return "student" if self.algorithm == "rsdqn" else "q"

    def exploration_schedule(self) -> Schedule:
        return Schedule(self.egreedy_start, self.egreedy_end, self.egreedy_frames)

    def lambda_schedule(self) -> Schedule:
        return LAMBDA_PRESETS[self.lambda_preset].scaled(self.frames / FULL_FRAMES)

    def epsilon_schedule(self) -> Schedule:
        return robust_epsilon_schedule(self.robust_epsilon).scaled(self.frames / FULL_FRAMES)

    def architecture(self, env: GridEnv, noisy: bool) -> Architecture:
        return Architecture(
            input_dim=env.observation_size, n_actions=env.n_actions, hidden=self.hidden,
            stream_hidden=self.stream_hidden, head=self.head, noisy=noisy, kappa=self.kappa,
        )


def td_target(batch: Batch, q_net: AgentNet, target_net: AgentNet, gamma: float,
              double: bool = True, mode: str = "eval") -> np.ndarray:
    """``r`` for terminal items, otherwise ``r + gamma * Q_target(s', a*)``.

    ``a*`` is the target net's own argmax, or the online net's argmax for
    double Q-learning.
    """
    with ag.no_grad():
        q_next_target = target_net.forward(batch.next_states, mode).q.data
        if double:
            best = np.argmax(q_net.forward(batch.next_states, mode).q.data, axis=1)
        else:
            best = np.argmax(q_next_target, axis=1)
    bootstrap = q_next_target[np.arange(len(best)), best]
    return batch.rewards + gamma * np.where(batch.dones, 0.0, bootstrap)


def q_loss(q_net: AgentNet, batch: Batch, targets: np.ndarray, mode: str = "eval"):
    """Importance-weighted mean squared TD error and the per-item errors."""
    q = ag.gather(q_net.forward(batch.states, mode).q, batch.actions)
    delta = ag.sub(targets, q)
    loss = ag.mean(ag.mul(ag.square(delta), batch.weights))
    return loss, delta.data


def q_update(q_net: AgentNet, target_net: AgentNet, batch: Batch, optimizer: Adam,
             gamma: float = 0.99, double: bool = True,
             noise_rng: np.random.Generator | None = None) -> np.ndarray:
    """One Adam step on the squared TD loss; returns ``(|delta| per item, loss)``."""
    mode = "eval"
    if q_net.arch.noisy and noise_rng is not None:
        q_net.sample_noise(noise_rng)
        target_net.sample_noise(noise_rng)
        mode = "train"
    targets = td_target(batch, q_net, target_net, gamma, double, mode)
    loss, delta = q_loss(q_net, batch, targets, mode)
    loss.backward()
    optimizer.step()
    return np.abs(delta), float(loss.data)


def clip_reward(r: float) -> float:
    return float(np.sign(r))


@dataclass
class TrainResult:
    nets: dict
    final_nets: dict
    metrics: list
    selected: str
    best_validation: float | None
    frames: int

    @property
    def deployed(self) -> AgentNet:
        return self.nets.get("student", self.nets["q"])


class Trainer:
    """Runs one training job; pieces are attributes so tests can swap them."""

    def __init__(self, config: TrainConfig, env: GridEnv | None = None,
                 metrics_sink: Callable[[dict], None] | None = None):
        config.validate()
        self.config = c = config
        self.env = env or make_env(c.env)
        self.val_env = make_env(c.env) if env is None else env.__class__()
        seeds = np.random.SeedSequence(c.seed).spawn(6)
        init_rng, self.explore_rng, self.noise_rng, self.replay_rng, env_rng, val_rng = (
            np.random.default_rng(s) for s in seeds
        )
        self.env_seeds = env_rng
        self.val_seeds = val_rng
        rsdqn = c.algorithm == "rsdqn"
        self.q = AgentNet(c.architecture(self.env, noisy=c.noisy and not rsdqn), init_rng)
        self.target = self.q.clone()
        self.student = AgentNet(c.architecture(self.env, noisy=c.noisy), init_rng) if rsdqn else None
        if self.student is not None:
            check_kind(c.defense, self.q, self.student)
        self.opt_q = Adam(self.q.params, c.lr_q, c.adam_eps)
        self.opt_s = Adam(self.student.params, c.lr_s, c.adam_eps) if rsdqn else None
        self.buffer = PrioritizedBuffer(c.buffer_capacity, c.priority_alpha, c.priority_beta)
        self.eps_greedy = c.exploration_schedule()
        self.lam = c.lambda_schedule()
        self.robust_eps = c.epsilon_schedule()
        self.metrics: list[dict] = []
        self.sink = metrics_sink
        self.attack = perturb_for_agent

    @property
    def explorer(self) -> AgentNet:
        return self.student if self.student is not None else self.q

    def nets(self) -> dict:
        out = {"q": self.q}
        if self.student is not None:
            out["student"] = self.student
        return out

    def _emit(self, record: dict) -> None:
        self.metrics.append(record)
        if self.sink is not None:
            self.sink(record)

    def _observe(self, obs: np.ndarray) -> np.ndarray:
        x = obs.reshape(-1)
        spec = self.config.train_attack
        if spec.kind == "none":
            return x
        return self.attack(spec, self.explorer, x)

    def train_step(self, frame: int) -> tuple[float, float | None]:
        c = self.config
        batch = self.buffer.sample(c.batch_size, self.replay_rng)
        td, q_loss_value = q_update(self.q, self.target, batch, self.opt_q, c.gamma, c.double_q,
                                    self.noise_rng if self.q.arch.noisy else None)
        self.buffer.update_priorities(batch.indices, td)
        if self.student is None:
            return q_loss_value, None
        if self.student.arch.noisy:
            self.student.sample_noise(self.noise_rng)
        ctx = DistillContext(c.defense_attack, self.lam(frame), self.robust_eps(frame), c.lambda_d,
                             "train" if self.student.arch.noisy else "eval")
        loss = distill_loss(c.defense, batch.states, self.q, self.student, ctx)
        loss.backward()
        self.opt_s.step()
        return q_loss_value, float(loss.data)

    def validate_episode(self) -> float:
        net = self.explorer
        env = self.val_env
        obs = env.reset(int(self.val_seeds.integers(2**31)))
        while not env.done:
            a = epsilon_greedy(net, obs.reshape(-1), self.config.validation_epsilon,
                               self.val_seeds, mode="eval")
            obs, _, _ = env.step(a)
        return env.score

    def run(self) -> TrainResult:
        c = self.config
        env = self.env
        explorer = self.explorer
        deferred = c.train_attack.kind != "none"
        pending: tuple | None = None
        best_score: float | None = None
        best_state: dict | None = None
        episode = 0
        losses_q: list[float] = []
        losses_s: list[float] = []

        raw = env.reset(int(self.env_seeds.integers(2**31)))
        for frame in range(c.frames):
            if explorer.arch.noisy:
                explorer.sample_noise(self.noise_rng)
            seen = self._observe(raw)
            if pending is not None:
                self.buffer.push(Transition(*pending, seen, False))
                pending = None
            eps = self.eps_greedy(frame)
            action = epsilon_greedy(explorer, seen, eps, self.explore_rng, mode="explore")
            raw, reward, done = env.step(action)
            r = clip_reward(reward) if c.clip_reward else reward
            if done:
                self.buffer.push(Transition(seen, action, r, raw.reshape(-1), True))
            elif deferred:
                pending = (seen, action, r)
            else:
                self.buffer.push(Transition(seen, action, r, raw.reshape(-1), False))

            if frame % c.target_sync == 0:
                self.target.load_state_dict(self.q.state_dict())
            if frame >= c.learn_start and len(self.buffer) >= c.batch_size:
                lq, ls = self.train_step(frame)
                losses_q.append(lq)
                if ls is not None:
                    losses_s.append(ls)

            if done:
                episode += 1
                record = {
                    "type": "episode", "episode": episode, "frame": frame + 1,
                    "score": env.score, "steps": env.t,
                    "q_loss": _mean_or_none(losses_q), "student_loss": _mean_or_none(losses_s),
                    "exploration_epsilon": eps,
                }
                if c.algorithm == "rsdqn" and c.defense == "provable":
                    record["lambda"] = self.lam(frame)
                    record["robust_epsilon"] = self.robust_eps(frame)
                self._emit(record)
                losses_q, losses_s = [], []
                if episode % c.validate_every == 0:
                    score = self.validate_episode()
                    self._emit({"type": "validation", "episode": episode, "frame": frame + 1,
                                "score": score})
                    if best_score is None or score >= best_score:
                        best_score = score
                        best_state = {k: n.state_dict() for k, n in self.nets().items()}
                raw = env.reset(int(self.env_seeds.integers(2**31)))

        final = {k: n.clone() for k, n in self.nets().items()}
        if c.algorithm == "rsdqn" and c.defense == "provable" or best_state is None:
            selected, chosen = "final", final
        else:
            selected = "best_validation"
            chosen = {k: n.clone() for k, n in self.nets().items()}
            for k, n in chosen.items():
                n.load_state_dict(best_state[k])
        for n in list(chosen.values()) + list(final.values()):
            n.clear_noise()
        return TrainResult(chosen, final, self.metrics, selected, best_score, c.frames)


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def run_training(config: TrainConfig, metrics_sink=None) -> TrainResult:
    return Trainer(config, metrics_sink=metrics_sink).run()

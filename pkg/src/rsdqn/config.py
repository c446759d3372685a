"""Experiment configuration files (TOML).

A config names the game, the algorithm and its defense, the seeds to train,
optional overrides for :class:`~rsdqn.training.TrainConfig`, and how to
evaluate and certify the result. Unknown keys are rejected at every level
so typos fail before any compute starts. Schema::

    name = "catch-dqn"            # optional, used for the output folder
    env = "catch"                 # "catch" | "crossing"
    algorithm = "dqn"             # "dqn" | "rsdqn"
    defense = "ce_duel"           # distillation loss, rsdqn only
    seeds = [0]
    output_dir = "runs/catch-dqn" # relative to the output root

    [train]                       # any TrainConfig field except env/algorithm/defense/seed
    frames = 200000
    [train.defense_attack]
    kind = "pgd"
    epsilon = 0.004
    steps = 1

    [train_attack]                # perturbation applied while training
    kind = "none"

    [evaluate]
    episodes = 15
    base_seed = 10000
    epsilon = 0.005
    attacks = [{kind = "none"}, {kind = "pgd", epsilon = 0.004, steps = 4}]

    [certify]
    episodes = 3
    base_seed = 20000
    stride = 1
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .attacks import AttackSpec
from .errors import ConfigError
from .training import TrainConfig

OUTPUT_ROOT_ENV = "RSDQN_OUTPUT_ROOT"
TOP_KEYS = {"name", "env", "algorithm", "defense", "seeds", "output_dir",
            "train", "train_attack", "evaluate", "certify"}
RESERVED_TRAIN_KEYS = {"env", "algorithm", "defense", "seed", "train_attack"}


def default_eval_attacks(epsilon: float = 0.004) -> list[AttackSpec]:
    """No attack, then TestPGD with 1, 4 and 50 steps."""
    return [AttackSpec("none")] + [AttackSpec("pgd", epsilon, k) for k in (1, 4, 50)]


@dataclass
class EvaluateSettings:
    episodes: int = 15
    base_seed: int = 10_000
    epsilon: float = 0.005
    attacks: list = field(default_factory=default_eval_attacks)

    def validate(self) -> None:
        if self.episodes < 1:
            raise ConfigError("evaluate.episodes must be >= 1")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("evaluate.epsilon must lie in [0, 1]")
        if not self.attacks:
            raise ConfigError("evaluate.attacks must not be empty")
        if any(a.kind == "training_pgd" for a in self.attacks):
            raise ConfigError("training_pgd is a training-time attack; use pgd for evaluation")


@dataclass
class CertifySettings:
    episodes: int = 3
    base_seed: int = 20_000
    stride: int = 1

    def validate(self) -> None:
        if self.episodes < 1 or self.stride < 1:
            raise ConfigError("certify.episodes and certify.stride must be >= 1")


@dataclass
class ExperimentConfig:
    env: str
    algorithm: str = "dqn"
    defense: str = "ce_duel"
    seeds: list = field(default_factory=lambda: [0])
    name: str = ""
    output_dir: str = ""
    train: dict = field(default_factory=dict)
    train_attack: AttackSpec = field(default_factory=AttackSpec)
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)
    certify: CertifySettings = field(default_factory=CertifySettings)

    def train_config(self, seed: int) -> TrainConfig:
        """The fully resolved training configuration for one seed."""
        return TrainConfig(env=self.env, algorithm=self.algorithm, defense=self.defense,
                           seed=seed, train_attack=self.train_attack, **self.train)

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.train_attack.kind not in ("none", "training_pgd", "pgd", "fgsm"):
            raise ConfigError(f"unsupported train_attack kind {self.train_attack.kind!r}")
        for seed in self.seeds:
            self.train_config(seed).validate()
        self.evaluate.validate()
        self.certify.validate()

    def output_path(self, root: str | os.PathLike | None = None) -> Path:
        """Output folder, resolved against the output root.

        The root is ``root`` if given, else the ``RSDQN_OUTPUT_ROOT``
        environment variable, else the working directory.
        """
        base = Path(root or os.environ.get(OUTPUT_ROOT_ENV) or ".")
        sub = self.output_dir or f"runs/{self.name or f'{self.env}-{self.algorithm}'}"
        return base / sub

    def to_dict(self) -> dict:
        return {
            "name": self.name, "env": self.env, "algorithm": self.algorithm,
            "defense": self.defense, "seeds": list(self.seeds), "output_dir": self.output_dir,
            "train": _plain(self.train), "train_attack": self.train_attack.to_dict(),
            "evaluate": {**dataclasses.asdict(self.evaluate),
                         "attacks": [a.to_dict() for a in self.evaluate.attacks]},
            "certify": dataclasses.asdict(self.certify),
        }


def _plain(d: dict) -> dict:
    return {k: (v.to_dict() if isinstance(v, AttackSpec) else list(v) if isinstance(v, tuple) else v)
            for k, v in d.items()}


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = f" in [{section}]" if section else ""
        raise ConfigError(f"unknown key(s) {unknown}{where}")


def _attack(section: str, data) -> AttackSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a table with kind/epsilon/steps")
    _check_keys(section, data, {"kind", "epsilon", "steps"})
    try:
        return AttackSpec(**data)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    """Build and fully validate an :class:`ExperimentConfig` from parsed TOML."""
    _check_keys("", data, TOP_KEYS)
    if "env" not in data:
        raise ConfigError("missing required key 'env'")

    train = dict(data.get("train", {}))
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)} - RESERVED_TRAIN_KEYS
    _check_keys("train", train, train_fields)
    for key in ("defense_attack",):
        if key in train:
            train[key] = _attack(f"train.{key}", train[key])
    if "hidden" in train:
        train["hidden"] = tuple(train["hidden"])

    ev = dict(data.get("evaluate", {}))
    _check_keys("evaluate", ev, {f.name for f in dataclasses.fields(EvaluateSettings)})
    if "attacks" in ev:
        ev["attacks"] = [_attack("evaluate.attacks", a) for a in ev["attacks"]]
    cert = data.get("certify", {})
    _check_keys("certify", cert, {f.name for f in dataclasses.fields(CertifySettings)})

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a list of integers")

    cfg = ExperimentConfig(
        env=data["env"],
        algorithm=data.get("algorithm", "dqn"),
        defense=data.get("defense", "ce_duel"),
        seeds=seeds,
        name=data.get("name", ""),
        output_dir=data.get("output_dir", ""),
        train=train,
        train_attack=_attack("train_attack", data.get("train_attack", {"kind": "none"})),
        evaluate=EvaluateSettings(**ev),
        certify=CertifySettings(**cert),
    )
    try:
        cfg.validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)

"""Experiment pipeline: train, evaluate under attack, certify, report.

Every artifact is deterministic for a fixed config and seed: JSON is written
with sorted keys, metrics carry no wall-clock times, and evaluation episodes
use fixed seeds ``base_seed + i``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .agents import AgentNet, epsilon_greedy
from .attacks import AttackSpec, perturb_for_agent
from .checkpoint import load_agents, save_agents
from .config import ExperimentConfig
from .envs import GridEnv, make_env
from .errors import CheckpointError, ConfigError
from .interval import epsilon_max_batch
from .training import TrainConfig, TrainResult, run_training

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.rsdqn"
METRICS_NAME = "metrics.jsonl"
PIXEL_LEVELS = 255.0


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def seed_dir(out: Path, seed: int) -> Path:
    return Path(out) / f"seed-{seed}"


# ---------------------------------------------------------------- training

def train_seed(cfg: ExperimentConfig, seed: int, out: Path,
               config_text: str | None = None) -> Path:
    """Train one seed and write checkpoint, metrics and config copies.

    Returns:
        Path of the written checkpoint.
    """
    tc = cfg.train_config(seed)
    folder = seed_dir(out, seed)
    folder.mkdir(parents=True, exist_ok=True)
    if config_text is not None:
        (folder / "config.toml").write_text(config_text)
    dump_json(tc.to_dict(), folder / "train_config.json")
    with open(folder / METRICS_NAME, "w") as fh:
        def sink(record: dict) -> None:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

        result = run_training(tc, metrics_sink=sink)
    path = folder / CHECKPOINT_NAME
    save_checkpoint(path, tc, result)
    log.info("seed %d: %s weights, best validation %s", seed, result.selected, result.best_validation)
    return path


def save_checkpoint(path, tc: TrainConfig, result: TrainResult) -> None:
    header = {
        "env": tc.env, "algorithm": tc.algorithm, "defense": tc.defense, "seed": tc.seed,
        "deploy": tc.deploy_key, "selected": result.selected,
        "best_validation": result.best_validation, "frames": result.frames,
        "train_config": tc.to_dict(),
    }
    save_agents(path, result.nets, header)


def load_deployed(path, env_name: str | None = None) -> tuple[dict, AgentNet, GridEnv]:
    """Load a checkpoint's deployed network and a matching environment.

    Raises:
        ConfigError: the network does not fit the requested environment.
    """
    header, nets = load_agents(path)
    key = header.get("deploy", "student" if "student" in nets else "q")
    if key not in nets:
        raise CheckpointError(f"{path}: no {key!r} network stored")
    env = make_env(env_name or header.get("env", ""))
    net = nets[key]
    if net.arch.input_dim != env.observation_size or net.arch.n_actions != env.n_actions:
        raise ConfigError(
            f"checkpoint network ({net.arch.input_dim} inputs, {net.arch.n_actions} actions) "
            f"does not match env {env.name!r} ({env.observation_size} inputs, {env.n_actions} actions)"
        )
    return header, net, env


def result_label(header: dict) -> str:
    if header.get("algorithm") == "rsdqn":
        label = f"RS-DQN[{header.get('defense')}]"
    else:
        label = "DQN"
    attack = header.get("train_config", {}).get("train_attack", {})
    if attack and attack.get("kind", "none") != "none":
        label += f" +{AttackSpec(**attack).label}"
    return label


# -------------------------------------------------------------- evaluation

def play_episode(net: AgentNet, env: GridEnv, seed: int, epsilon: float = 0.005,
                 attack: AttackSpec | None = None, record_states: bool = False):
    """One deterministic episode with the network in eval mode.

    The attack, if any, is computed against ``net`` on every observation.

    Returns:
        ``(score, states)`` where ``states`` lists the clean flattened
        observations when ``record_states`` is set, else is empty.
    """
    rng = np.random.default_rng(seed)
    obs = env.reset(seed)
    states = []
    while not env.done:
        x = obs.reshape(-1)
        if record_states:
            states.append(x)
        if attack is not None and attack.kind != "none":
            x = perturb_for_agent(attack, net, x, mode="eval")
        obs, _, _ = env.step(epsilon_greedy(net, x, epsilon, rng, mode="eval"))
    return float(env.score), states


def evaluate(path, attacks: list[AttackSpec], episodes: int = 15, base_seed: int = 10_000,
             epsilon: float = 0.005, env_name: str | None = None) -> dict:
    """Score the deployed network of a checkpoint under each attack."""
    header, net, env = load_deployed(path, env_name)
    rows = []
    for spec in attacks:
        seeds = [base_seed + i for i in range(episodes)]
        scores = [play_episode(net, env, s, epsilon, spec)[0] for s in seeds]
        rows.append({"attack": spec.label, "spec": spec.to_dict(), "seeds": seeds,
                     "scores": scores, **_summary(scores)})
    return {"kind": "evaluation", "env": env.name, "algorithm": header.get("algorithm"),
            "label": result_label(header), "checkpoint": str(path), "epsilon": epsilon,
            "rows": rows}


def certify(path, episodes: int = 3, base_seed: int = 20_000, stride: int = 1,
            epsilon: float = 0.005, env_name: str | None = None) -> dict:
    """Certified radius at states visited by clean episodes of the deployed network."""
    header, net, env = load_deployed(path, env_name)
    if not net.dueling:
        raise ConfigError("certification needs a dueling network (it certifies the advantage head)")
    per_episode = []
    for i in range(episodes):
        seed = base_seed + i
        score, states = play_episode(net, env, seed, epsilon, record_states=True)
        radii = epsilon_max_batch(net, np.array(states[::stride])).tolist()
        per_episode.append({"seed": seed, "score": score, "epsilons": radii,
                            "mean_epsilon": float(np.mean(radii))})
    row = {"label": result_label(header), "episodes": per_episode}
    row.update(_certify_summary(per_episode))
    return {"kind": "certification", "env": env.name, "algorithm": header.get("algorithm"),
            "label": result_label(header), "checkpoint": str(path), "epsilon": epsilon,
            "stride": stride, "rows": [row]}


def _summary(scores) -> dict:
    a = np.asarray(scores, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std()), "n": int(a.size)}


def _certify_summary(per_episode: list[dict]) -> dict:
    radii = np.concatenate([np.asarray(e["epsilons"], dtype=np.float64) for e in per_episode])
    scores = [e["score"] for e in per_episode]
    return {
        "mean_epsilon": float(radii.mean()), "std_epsilon": float(radii.std()),
        "mean_epsilon_255": float(radii.mean() * PIXEL_LEVELS),
        "std_epsilon_255": float(radii.std() * PIXEL_LEVELS),
        "states": int(radii.size), "score": _summary(scores),
    }


# ------------------------------------------------------------------ report

def load_result(path) -> list[dict]:
    """Read an evaluation, certification or report file; returns result dicts.

    Raises:
        ConfigError: the file is unreadable, malformed, or its summary
            numbers disagree with its per-episode records.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read result file ({exc})") from exc
    results = data.get("results") if isinstance(data, dict) and data.get("kind") == "report" else [data]
    try:
        for r in results:
            check_result(r)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed result ({exc})") from exc
    return results


def check_result(r: dict, tol: float = 1e-9) -> None:
    """Recompute every summary number from the stored per-episode records."""
    if r["kind"] == "evaluation":
        for row in r["rows"]:
            _match(row, _summary(row["scores"]), tol, row["attack"])
    elif r["kind"] == "certification":
        for row in r["rows"]:
            for e in row["episodes"]:
                _match(e, {"mean_epsilon": float(np.mean(e["epsilons"]))}, tol, f"seed {e['seed']}")
            _match(row, _certify_summary(row["episodes"]), tol, row["label"])
    else:
        raise ValueError(f"unknown result kind {r['kind']!r}")


def _match(stored: dict, fresh: dict, tol: float, where: str) -> None:
    for k, v in fresh.items():
        if isinstance(v, dict):
            _match(stored[k], v, tol, where)
        elif abs(float(stored[k]) - v) > tol * max(1.0, abs(v)):
            raise ValueError(f"{where}: stored {k}={stored[k]} but records give {v}")


def report(paths) -> tuple[str, dict]:
    """Merge result files into text tables and one machine-readable dict."""
    if not paths:
        raise ConfigError("no result files given")
    results = [r for p in paths for r in load_result(p)]
    if not results:
        raise ConfigError("result files contain no results")
    return render(results), {"kind": "report", "results": results}


def render(results: list[dict]) -> str:
    blocks = []
    evals = [r for r in results if r["kind"] == "evaluation"]
    certs = [r for r in results if r["kind"] == "certification"]
    if evals:
        lines = ["Evaluation scores (mean +- std over n episodes)",
                 f"{'env':<10} {'agent':<34} {'attack':<18} {'mean':>9} {'std':>8} {'n':>4}"]
        for r in evals:
            for row in r["rows"]:
                lines.append(f"{r['env']:<10} {r['label']:<34} {row['attack']:<18} "
                             f"{row['mean']:>9.2f} {row['std']:>8.2f} {row['n']:>4d}")
        blocks.append("\n".join(lines))
    if certs:
        lines = ["Certified radius at visited states",
                 f"{'env':<10} {'agent':<34} {'score':>8} {'eps_max':>10} {'std':>10} "
                 f"{'eps_max*255':>12} {'std*255':>10} {'states':>7}"]
        for r in certs:
            for row in r["rows"]:
                lines.append(
                    f"{r['env']:<10} {row['label']:<34} {row['score']['mean']:>8.2f} "
                    f"{row['mean_epsilon']:>10.6f} {row['std_epsilon']:>10.6f} "
                    f"{row['mean_epsilon_255']:>12.4f} {row['std_epsilon_255']:>10.4f} {row['states']:>7d}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"

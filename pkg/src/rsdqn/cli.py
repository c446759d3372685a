"""Command line entry point: ``rsdqn train|evaluate|certify|report``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import harness
from .attacks import AttackSpec
from .errors import RSDQNError


def _attack_from_args(args, phase_default: str) -> AttackSpec | None:
    if args.attack is None:
        if args.eps is not None or args.k is not None:
            raise config_mod.ConfigError("--eps/--k need --attack")
        return None
    phase = args.phase or phase_default
    kind = args.attack
    if kind == "pgd" and phase == "train":
        kind = "training_pgd"
    eps = 0.004 if args.eps is None else args.eps
    steps = 1 if args.k is None else args.k
    if kind == "none":
        return AttackSpec("none")
    return AttackSpec(kind, eps, steps)


def _load_config(args) -> tuple[config_mod.ExperimentConfig, str]:
    text = Path(args.config).read_text() if Path(args.config).is_file() else None
    if text is None:
        raise config_mod.ConfigError(f"config file {args.config} not found")
    cfg = config_mod.loads(text)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "frames", None) is not None:
        cfg.train = {**cfg.train, "frames": args.frames}
    cfg.validate()
    return cfg, text


def cmd_train(args) -> int:
    cfg, text = _load_config(args)
    attack = _attack_from_args(args, "train")
    if attack is not None:
        if args.phase == "test":
            raise config_mod.ConfigError("train only accepts --phase train attacks")
        cfg.train_attack = attack
        cfg.validate()
    out = cfg.output_path(args.output_root)
    for seed in cfg.seeds:
        path = harness.train_seed(cfg, seed, out, config_text=text)
        print(path)
    return 0


def _targets(args) -> tuple[list[Path], config_mod.ExperimentConfig | None]:
    if args.config:
        cfg, _ = _load_config(args)
        out = cfg.output_path(args.output_root)
        return [harness.seed_dir(out, s) / harness.CHECKPOINT_NAME for s in cfg.seeds], cfg
    if not args.checkpoint:
        raise config_mod.ConfigError("give a checkpoint path or --config")
    return [Path(args.checkpoint)], None


def _write(result: dict, stem: Path) -> None:
    harness.dump_json(result, stem.with_suffix(".json"))
    text = harness.render([result])
    stem.with_suffix(".txt").write_text(text)
    print(text, end="")


def cmd_evaluate(args) -> int:
    paths, cfg = _targets(args)
    settings = cfg.evaluate if cfg else config_mod.EvaluateSettings()
    attack = _attack_from_args(args, "test")
    if attack is not None:
        if attack.kind == "training_pgd":
            raise config_mod.ConfigError("evaluation attacks use --phase test")
        settings = dataclasses.replace(settings, attacks=[attack])
    if args.episodes is not None:
        settings = dataclasses.replace(settings, episodes=args.episodes)
    if args.base_seed is not None:
        settings = dataclasses.replace(settings, base_seed=args.base_seed)
    settings.validate()
    for path in paths:
        result = harness.evaluate(path, settings.attacks, settings.episodes, settings.base_seed,
                                  settings.epsilon, args.env)
        _write(result, Path(args.out) if args.out and len(paths) == 1 else path.parent / "evaluate")
    return 0


def cmd_certify(args) -> int:
    paths, cfg = _targets(args)
    settings = cfg.certify if cfg else config_mod.CertifySettings()
    epsilon = cfg.evaluate.epsilon if cfg else 0.005
    if args.episodes is not None:
        settings = dataclasses.replace(settings, episodes=args.episodes)
    if args.base_seed is not None:
        settings = dataclasses.replace(settings, base_seed=args.base_seed)
    if args.stride is not None:
        settings = dataclasses.replace(settings, stride=args.stride)
    settings.validate()
    for path in paths:
        result = harness.certify(path, settings.episodes, settings.base_seed, settings.stride,
                                 epsilon, args.env)
        _write(result, Path(args.out) if args.out and len(paths) == 1 else path.parent / "certify")
    return 0


def cmd_report(args) -> int:
    text, data = harness.report(args.results)
    print(text, end="")
    if args.json:
        Path(args.json).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
    if args.text:
        Path(args.text).write_text(text)
    return 0


def _attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--attack", choices=["none", "fgsm", "pgd"], help="attack kind")
    p.add_argument("--eps", type=float, help="attack radius (default 0.004)")
    p.add_argument("--k", type=int, help="attack steps (default 1)")
    p.add_argument("--phase", choices=["test", "train"],
                   help="test: attack the evaluated agent; train: sign-flipped attack while training")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsdqn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train every seed of an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="train only this seed")
    p.add_argument("--frames", type=int, help="override the frame budget")
    p.add_argument("--output-root", help=f"overrides ${config_mod.OUTPUT_ROOT_ENV}")
    _attack_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("evaluate", cmd_evaluate, "score checkpoints under attacks"),
                              ("certify", cmd_certify, "certified radius along clean episodes")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("checkpoint", nargs="?")
        p.add_argument("--config", help="use the checkpoints and settings of this experiment")
        p.add_argument("--seed", type=int, help="with --config: only this training seed")
        p.add_argument("--env", help="environment to play (default: the one trained on)")
        p.add_argument("--episodes", type=int)
        p.add_argument("--base-seed", type=int, help="episode i uses seed base + i")
        p.add_argument("--out", help="output path stem for .json and .txt (single checkpoint)")
        p.add_argument("--output-root", help=f"overrides ${config_mod.OUTPUT_ROOT_ENV}")
        if name == "evaluate":
            _attack_flags(p)
        else:
            p.add_argument("--stride", type=int, help="certify every n-th visited state")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="tabulate evaluation and certification results")
    p.add_argument("results", nargs="*")
    p.add_argument("--json", help="write the merged machine-readable report here")
    p.add_argument("--text", help="write the rendered tables here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RSDQNError, OSError) as exc:
        print(f"rsdqn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

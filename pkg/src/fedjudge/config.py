"""JSON config files for the experiment driver.

A config file is a flat JSON object mirroring ExperimentConfig, with nested
objects for the trainer configs ("local_train", "pretrain", "judge",
"eval_cfg"). Missing keys fall back to the defaults; unknown keys are
rejected so typos fail loudly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, fields, replace

from .errors import ConfigError, InputError
from .harness import ExperimentConfig
from .judge import JudgeEvalConfig, JudgeTrainConfig
from .nn import TrainConfig


def _build(cls, raw: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return raw


def _train_cfg(raw: dict, where: str) -> TrainConfig:
    return TrainConfig(**_build(TrainConfig, raw, where))


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    kwargs = {}
    if "local_train" in raw:
        kwargs["local_train"] = _train_cfg(raw.pop("local_train"), "local_train")
    if "pretrain" in raw:
        pre_raw = raw.pop("pretrain")
        kwargs["pretrain"] = (None if pre_raw is None
                              else _train_cfg(pre_raw, "pretrain"))
    if "judge" in raw:
        judge_raw = dict(raw.pop("judge"))
        if "sim_train_cfg" in judge_raw:
            judge_raw["sim_train_cfg"] = _train_cfg(
                judge_raw.pop("sim_train_cfg"), "judge.sim_train_cfg")
        kwargs["judge"] = JudgeTrainConfig(
            **_build(JudgeTrainConfig, judge_raw, "judge"))
    if "eval_cfg" in raw:
        kwargs["eval_cfg"] = JudgeEvalConfig(
            **_build(JudgeEvalConfig, raw.pop("eval_cfg"), "eval_cfg"))
    for key in ("seeds", "hidden", "attack_schedule"):
        if key in raw and raw[key] is not None:
            raw[key] = tuple(raw[key])
    kwargs.update(_build(ExperimentConfig, raw, "config"))
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    for key in ("seeds", "hidden", "attack_schedule"):
        if out[key] is not None:
            out[key] = list(out[key])
    return out


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    return config_from_dict(raw)


def save_config(path: str, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_overrides(cfg: ExperimentConfig, *, clients=None, malicious_frac=None,
                    flip_frac=None, seed=None, rounds=None) -> ExperimentConfig:
    """CLI flag overrides on top of a loaded config."""
    changes = {}
    if clients is not None:
        changes["n_clients"] = clients
    if malicious_frac is not None:
        changes["malicious_fraction"] = malicious_frac
    if flip_frac is not None:
        changes["flip_fraction"] = flip_frac
    if seed is not None:
        changes["seeds"] = (seed,)
    if rounds is not None:
        changes["rounds"] = rounds
        if cfg.attack_schedule is not None:
            changes["attack_schedule"] = None
    return replace(cfg, **changes) if changes else cfg

"""Run configuration: one structured document, strict keys, CLI overrides.

Precedence is defaults < config file < command-line flags. Every command
writes its fully resolved configuration (plus library versions and the seed)
next to its outputs, so any run directory is self-describing and exactly
reproducible.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .data import SynthConfig
from .model import ModelConfig
from .training import StageConfig


class ConfigError(ValueError):
    pass


def _build(cls, doc: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown config key {where}.{unknown[0]!r}")
    kwargs = dict(doc)
    for f in dataclasses.fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {where} config: {e}") from e


@dataclass(frozen=True)
class TTAConfig:
    scales: tuple[float, ...] = (1.2, 1.3, 1.4)
    flip: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "runs/out"
    train_root: str | None = None
    eval_root: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    tta: TTAConfig = field(default_factory=TTAConfig)
    stage1: StageConfig = field(
        default_factory=lambda: StageConfig(stage=1, iterations=2000, batch_size=4)
    )
    stage2: StageConfig = field(
        default_factory=lambda: StageConfig(stage=2, iterations=2000, batch_size=4)
    )
    synth: SynthConfig = field(default_factory=SynthConfig)
    synth_sequences: int = 40

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)

        def clean(x):
            if isinstance(x, tuple):
                return [clean(v) for v in x]
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            return x

        return clean(doc)


_SECTIONS = {
    "model": ModelConfig,
    "tta": TTAConfig,
    "stage1": StageConfig,
    "stage2": StageConfig,
    "synth": SynthConfig,
}


def config_from_dict(doc: dict) -> RunConfig:
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    kwargs: dict = {}
    seed = doc.get("seed", 0)
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            section = dict(value)
            # the top-level seed reaches every component unless overridden
            if key == "model":
                section.setdefault("seed", seed)
            elif key == "stage1":
                section.setdefault("stage", 1)
                section.setdefault("seed", seed)
            elif key == "stage2":
                section.setdefault("stage", 2)
                section.setdefault("seed", seed + 1)
            elif key == "synth":
                section.setdefault("seed", seed)
            kwargs[key] = _build(_SECTIONS[key], section, key)
        else:
            kwargs[key] = value
    for key, cls in _SECTIONS.items():
        if key not in kwargs:
            if key == "model":
                kwargs[key] = ModelConfig(seed=seed)
            elif key == "stage1":
                kwargs[key] = StageConfig(stage=1, iterations=2000, batch_size=4, seed=seed)
            elif key == "stage2":
                kwargs[key] = StageConfig(stage=2, iterations=2000, batch_size=4, seed=seed + 1)
            elif key == "synth":
                kwargs[key] = SynthConfig(seed=seed)
            else:
                kwargs[key] = cls()
    return _build(RunConfig, kwargs, "run")


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return config_from_dict(doc)


def resolve(path: str | None, overrides: dict) -> RunConfig:
    """Config file merged with CLI overrides (flags win)."""
    doc: dict = {}
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return config_from_dict(doc)


def write_resolved(cfg: RunConfig, out_dir, command: str) -> None:
    import numpy
    import torch

    from . import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "versions": {
            "depthvos": __version__,
            "numpy": numpy.__version__,
            "python": sys.version.split()[0],
            "torch": torch.__version__,
        },
        "seed": cfg.seed,
    }
    with open(out / "config.resolved.json", "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)

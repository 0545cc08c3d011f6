"""Run configuration: one flat dataclass, file parsing, and overrides.

Config files are `key = value` lines with `#` comments.  Field names
are the keys; defaults follow the published experimental settings
(embedding 200, history 200, conv channels 128, MLP hidden 400,
20 rollouts, beam 5, 3 hops, zero KL re-weighting).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping

from .errors import DataError
from .model import ModelDims

MODES = ("diva", "mml")
BASELINES = ("none", "moving_average")


@dataclass
class RunConfig:
    graph: str = ""
    train_instances: str = ""
    test_instances: str = ""
    embed_size: int = 200
    hidden_size: int = 200
    conv_channels: int = 128
    mlp_hidden: int = 400
    rollouts: int = 20
    beam: int = 5
    max_hops: int = 3
    lambda_kl: float = 0.0
    learning_rate: float = 0.001
    episodes: int = 50
    seed: int = 0
    mode: str = "diva"
    tie_embeddings: bool = True
    action_cap: int = 512
    baseline: str = "none"
    checkpoint_every: int = 0
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.baseline not in BASELINES:
            raise DataError(f"baseline must be one of {BASELINES}, got {self.baseline!r}")
        if self.rollouts < 1:
            raise DataError("rollouts must be at least 1")
        if self.lambda_kl < 0:
            raise DataError("lambda_kl must be non-negative")
        if self.beam < 1:
            raise DataError("beam must be at least 1")
        if self.max_hops < 1:
            raise DataError("max_hops must be at least 1")
        if self.episodes < 0:
            raise DataError("episodes must be non-negative")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.action_cap < 1:
            raise DataError("action_cap must be at least 1")
        if self.threads < 1:
            raise DataError("threads must be at least 1")
        return self

    def dims(self) -> ModelDims:
        return ModelDims(embed=self.embed_size, hidden=self.hidden_size,
                         conv_channels=self.conv_channels,
                         mlp_hidden=self.mlp_hidden, max_hops=self.max_hops,
                         tie_embeddings=self.tie_embeddings)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    field = _FIELDS[key]
    text = raw.strip()
    if field.type in ("bool", bool):
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise DataError(f"config key {key!r}: expected a boolean, got {text!r}")
    try:
        if field.type in ("int", int):
            return int(text)
        if field.type in ("float", float):
            return float(text)
    except ValueError:
        raise DataError(f"config key {key!r}: cannot parse {text!r} "
                        f"as {field.type}") from None
    return text


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, str]) -> RunConfig:
    for key, raw in overrides.items():
        if key not in _FIELDS:
            raise DataError(f"unknown config key {key!r}; valid keys: "
                            f"{', '.join(sorted(_FIELDS))}")
        setattr(cfg, key, _coerce(key, raw))
    return cfg


def load_config(source: str | Path | IO[str]) -> RunConfig:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)
    overrides: dict[str, str] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        overrides[key] = value
    return apply_overrides(RunConfig(), overrides)


def save_config(cfg: RunConfig, dest: str | Path | IO[str]) -> None:
    close = False
    if isinstance(dest, (str, Path)):
        dest = open(dest, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        for key, value in cfg.to_dict().items():
            dest.write(f"{key} = {value}\n")
    finally:
        if close:
            dest.close()

"""Run configuration: one JSON document with five sections plus the master seed and io paths.

Precedence is flags > config file > defaults. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment.pipeline import AugmentationConfig
from .generators import GeneratorKind
from .model.forecaster import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    kinds: dict = field(default_factory=lambda: {k.value: 1.0 for k in GeneratorKind})  # kind -> weight
    length: int = 2048
    freqs: tuple[str, ...] = ("H", "D", "W", "M", "15min")
    count: int = 1000

    def __post_init__(self):
        unknown = set(self.kinds) - {k.value for k in GeneratorKind}
        if unknown:
            raise ConfigError(f"unknown generator kinds {sorted(unknown)}")
        if not self.kinds or any(w < 0 for w in self.kinds.values()) or sum(self.kinds.values()) <= 0:
            raise ConfigError("generator weights must be nonnegative and not all zero")
        if self.length < 4 or self.count < 0 or not self.freqs:
            raise ConfigError("generation needs length >= 4, count >= 0 and at least one frequency")


@dataclass(frozen=True)
class EvaluationConfig:
    horizon: int = 48
    season: int | None = None  # None -> derived from each series' frequency
    nan_fractions: tuple[float, ...] = (0.0, 0.3, 0.6, 0.9)

    def __post_init__(self):
        if self.horizon < 1 or (self.season is not None and self.season < 1):
            raise ConfigError("horizon and season must be >= 1")


@dataclass(frozen=True)
class PathsConfig:
    data: tuple[str, ...] = ()
    out: str | None = None
    checkpoint: str | None = None


SECTIONS = {
    "generation": GenerationConfig,
    "augmentation": AugmentationConfig,
    "model": ModelConfig,
    "training": TrainConfig,
    "evaluation": EvaluationConfig,
    "paths": PathsConfig,
}


def build_section(cls, data: dict, section: str):
    """Instantiate a config dataclass, rejecting unknown keys and turning JSON lists into tuples."""
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for k, v in data.items():
        f = fields[k]
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[k] = tuple(v) if isinstance(v, list) and (isinstance(default, tuple) or "tuple" in str(f.type)) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(SECTIONS) - {"master_seed"}
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
        seed = data.get("master_seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("master_seed must be an integer")
        parts = {name: build_section(c, data[name], name) for name, c in SECTIONS.items() if name in data}
        return cls(master_seed=seed, **parts)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {"master_seed": self.master_seed}
        for name in SECTIONS:
            section = getattr(self, name)
            out[name] = section.to_dict() if hasattr(section, "to_dict") else dataclasses.asdict(section)
        return json.loads(json.dumps(out))  # tuples -> lists

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

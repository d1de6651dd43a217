"""Run configuration: every hyperparameter and variant switch.

Config files are flat UTF-8 ``key = value`` text; ``#`` starts a comment.
``search_range = whole`` (or ``none``) searches the whole timeline and
``time_dim = auto`` ties the time-encoding width to ``embedding_size``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    pass


_CHOICES = {
    "activation": ("tanh", "relu"),
    "score_fn": ("distmult", "complex"),
    "sampler_variant": ("weighted", "uniform", "all"),
    "time_encoder_variant": ("difference", "absolute"),
    "tie_mode": ("pessimistic", "mean"),
    "filter_mode": ("time-aware", "static"),
    "agg_steps": (1, 2),
}


@dataclass(frozen=True)
class RunConfig:
    embedding_size: int = 300
    time_dim: Optional[int] = None
    agg_steps: int = 1
    activation: str = "tanh"
    search_range: Optional[int] = None
    max_neighbors: int = 100
    score_fn: str = "distmult"
    sampler_variant: str = "weighted"
    time_encoder_variant: str = "difference"
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    weight_decay: float = 0.0
    include_same_time: bool = True
    mask_query_edge: bool = True
    tie_mode: str = "pessimistic"
    filter_mode: str = "time-aware"
    eval_batch_size: int = 512

    def __post_init__(self):
        for name, allowed in _CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        for name in ("embedding_size", "max_neighbors", "batch_size", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.time_dim is not None and self.time_dim < 1:
            raise ConfigError("time_dim must be positive")
        if self.search_range is not None and self.search_range < 0:
            raise ConfigError("search_range must be >= 0")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")
        if self.score_fn == "complex" and self.embedding_size % 2:
            raise ConfigError("complex scoring needs an even embedding_size")

    @property
    def d_time(self) -> int:
        return self.time_dim if self.time_dim is not None else self.embedding_size

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "whole" if f.name == "search_range" else "auto"
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def diff(self, other: "RunConfig") -> dict[str, tuple]:
        return {
            f.name: (getattr(self, f.name), getattr(other, f.name))
            for f in fields(self)
            if getattr(self, f.name) != getattr(other, f.name)
        }


# best settings per benchmark; all search the whole timeline with 100 neighbors
PRESETS = {
    "icews14": RunConfig(embedding_size=300),
    "icews05-15": RunConfig(embedding_size=200),
    "gdelt": RunConfig(embedding_size=200),
}

ABLATIONS = {
    "absolute-time": {"time_encoder_variant": "absolute"},
    "random-sample": {"sampler_variant": "uniform"},
    "whole-neighborhood": {"sampler_variant": "all"},
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    typ = _FIELD_TYPES[key]
    val = raw.strip()
    if "Optional" in typ and val.lower() in ("none", "whole", "auto", "unbounded", ""):
        return None
    try:
        if "bool" in typ:
            low = val.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(val)
        if "int" in typ:
            return int(val)
        if "float" in typ:
            return float(val)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return val


def parse_overrides(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip().replace("-", "_")
        out[k] = _coerce(k, v)
    return out


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        values[k.strip()] = _coerce(k.strip(), v)
    return values


def load_config(path=None, base: Optional[RunConfig] = None, **overrides) -> RunConfig:
    cfg = base or RunConfig()
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8")))
    values.update({k: v for k, v in overrides.items()})
    return cfg.replace(**values)


def ablation_config(base: RunConfig, variant: str) -> RunConfig:
    if variant not in ABLATIONS:
        raise ConfigError(f"unknown ablation variant {variant!r}; choose from {sorted(ABLATIONS)}")
    return base.replace(**ABLATIONS[variant])

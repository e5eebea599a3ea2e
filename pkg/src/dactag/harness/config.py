"""Flat ``key = value`` configuration with typed validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from ..errors import ConfigError

CHOICES = {
    "encoder": ("vanilla", "hgru", "perso"),
    "attention": ("none", "vanilla", "soft", "hard"),
    "model": ("seq2seq", "crf"),
    "optimizer": ("adam", "adamw"),
    "risk_cost": ("last_tag", "hamming", "paper_literal"),
}

POSITIVE = {"context_window", "d_emb", "d_enc", "d_dec", "vanilla_layers", "lr", "patience",
            "clip", "max_seq_len", "min_count", "B_train", "B_inf", "batch_size", "max_epochs"}


@dataclass(frozen=True)
class Config:
    context_window: int = 5
    model: str = "seq2seq"
    encoder: str = "hgru"
    attention: str = "hard"
    d_emb: int = 300
    d_enc: int = 128
    d_dec: int = 48
    vanilla_layers: int = 2
    optimizer: str = "adam"
    lr: float = 0.01
    weight_decay: float = 1e-5
    patience: int = 20
    decay: float = 0.5
    min_lr: float = 1e-5
    clip: float = 5.0
    dropout: float = 0.2
    max_seq_len: int = 20
    min_count: int = 1
    batch_size: int = 32
    max_epochs: int = 100
    early_stop: int = 0
    B_train: int = 2
    B_inf: int = 5
    alpha_lp: float = 0.65
    risk_cost: str = "last_tag"
    risk_epochs: int = 10
    seed: int = 0
    embeddings: str = ""

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in CHOICES and v not in CHOICES[f.name]:
                raise ConfigError(f"{f.name}: {v!r} is not one of {', '.join(CHOICES[f.name])}")
            if f.name in POSITIVE and not v > 0:
                raise ConfigError(f"{f.name}: must be positive, got {v!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout: must be in [0, 1), got {self.dropout!r}")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError(f"decay: must be in (0, 1], got {self.decay!r}")
        for name in ("weight_decay", "alpha_lp", "min_lr", "early_stop", "risk_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative")

    def replace(self, **overrides) -> "Config":
        return dataclasses.replace(self, **overrides)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None
    return raw


def parse_overrides(pairs: dict[str, str]) -> dict:
    out = {}
    for key, raw in pairs.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, str(raw).strip())
    return out


def parse_config(text: str, where: str = "<config>", base: Config | None = None) -> Config:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{where}:{lineno}: unknown config key {key!r}")
        if key in pairs:
            raise ConfigError(f"{where}:{lineno}: duplicate key {key!r}")
        pairs[key] = raw
    return (base or Config()).replace(**parse_overrides(pairs))


def load_config(path) -> Config:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def preset(name: str) -> Config:
    """Shipped presets: ``swda`` and ``mrda``."""
    try:
        text = resources.files("dactag.configs").joinpath(f"{name}.conf").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no preset named {name!r}") from None
    return parse_config(text, f"preset:{name}")

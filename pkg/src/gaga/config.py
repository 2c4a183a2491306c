"""Run configuration: one flat key=value schema shared by every command.

Besides the core hyperparameters (learning_rate, weight_decay, batch_size,
dropout, n_hidden, n_layers, n_head, n_hops, alpha, max_epoch) the schema
covers splitting, early stopping and the architecture switches. Unknown keys
are rejected.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from gaga._io import atomic_write_text
from gaga.groupagg import VARIANT_GAGA, VARIANT_GT, GroupAggConfig
from gaga.model import ModelConfig
from gaga.train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    learning_rate: float = 0.001
    weight_decay: float = 0.0001
    batch_size: int = 512
    dropout: float = 0.1
    n_hidden: int = 32
    n_layers: int = 3
    n_head: int = 4
    n_hops: int = 2
    alpha: float = 1.0
    max_epoch: int = 500
    patience: int = 100
    seed: int = 0
    train_frac: float = 0.4
    val_frac: float = 0.1
    label_frac: float = 0.4
    activation: str = "relu"
    variant: str = VARIANT_GAGA
    use_hop_encoding: bool = True
    use_relation_encoding: bool = True
    use_group_encoding: bool = True
    residual: bool = True
    ffn_mult: int = 2
    threshold: float = 0.5
    workers: int = 1

    def __post_init__(self):
        try:
            self.groupagg_config()
            self.train_config()
            ModelConfig(input_dim=1, num_relations=1, **self._model_kwargs())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("train_frac", "val_frac", "label_frac"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if self.train_frac + self.val_frac > 1.0 + 1e-12:
            raise ConfigError("train_frac + val_frac exceeds 1")
        if self.label_frac > self.train_frac + 1e-12:
            raise ConfigError("label_frac exceeds train_frac")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    # -- views consumed by the pipeline

    def groupagg_config(self) -> GroupAggConfig:
        return GroupAggConfig(num_hops=self.n_hops, alpha=self.alpha)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            max_epochs=self.max_epoch,
            patience=self.patience,
            seed=self.seed if seed is None else seed,
        )

    def _model_kwargs(self) -> dict:
        return dict(
            hidden=self.n_hidden,
            n_layers=self.n_layers,
            n_heads=self.n_head,
            num_hops=self.n_hops,
            dropout=self.dropout,
            activation=self.activation,
            variant=self.variant,
            use_hop_encoding=self.use_hop_encoding,
            use_relation_encoding=self.use_relation_encoding,
            use_group_encoding=self.use_group_encoding,
            residual=self.residual,
            ffn_mult=self.ffn_mult,
        )

    def model_config(self, input_dim: int, num_relations: int) -> ModelConfig:
        return ModelConfig(input_dim=input_dim, num_relations=num_relations, **self._model_kwargs())

    # -- text form

    def to_text(self) -> str:
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path) -> None:
        atomic_write_text(path, self.to_text())

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, pairs) -> "RunConfig":
        return self.replace(**parse_pairs(pairs, source="--set"))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        lines = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append((lineno, line))
        values = parse_pairs(lines, source)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"{path}: missing config file")
        return cls.from_text(path.read_text(encoding="utf-8"), str(path))


_SCHEMA = {f.name: f.type for f in fields(RunConfig)}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, text: str, where: str):
    kind = _SCHEMA[key]
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
    except ValueError:
        raise ConfigError(f"{where}: {key} expects {kind}, got {text!r}") from None
    if key == "variant" and text not in (VARIANT_GAGA, VARIANT_GT):
        raise ConfigError(f"{where}: variant must be {VARIANT_GAGA} or {VARIANT_GT}")
    return text


def parse_pairs(pairs, source: str) -> dict:
    """Validate ``key=value`` items; each item is a string or (lineno, string)."""
    out = {}
    for item in pairs:
        lineno, text = item if isinstance(item, tuple) else (None, item)
        where = source if lineno is None else f"{source}:{lineno}"
        if "=" not in text:
            raise ConfigError(f"{where}: expected key=value, got {text!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        out[key] = _coerce(key, value, where)
    return out

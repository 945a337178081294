"""Declarative run configuration: one YAML document with sections
{data, mcqvae, ct, train, weights}; documented field-by-field in
docs/config.md. Flags override file values via dotted keys."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from ctvae.schema import DEFAULT_SCHEMA, FactorSchema
from ctvae.mcqvae.model import McqVaeConfig
from ctvae.ct.layer import CtConfig, NoiseConfig
from ctvae.training.losses import LossWeights


def parse_schema_spec(spec: str, image_size=(32, 32), channels=1) -> FactorSchema:
    """Parse ``"shape:3,scale:3,pos_x:8,pos_y:8"`` into a schema."""
    factors = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, _, card = chunk.partition(":")
        if not card:
            raise ValueError(f"bad schema chunk {chunk!r}; expected 'name:cardinality'")
        factors.append((name.strip(), int(card)))
    return FactorSchema(factors=tuple(factors), image_size=tuple(image_size), channels=channels)


@dataclass
class DataConfig:
    schema: str = "shape:3,scale:3,pos_x:8,pos_y:8"
    image_size: tuple[int, int] = (32, 32)
    channels: int = 1
    seed: int = 0
    root: Optional[str] = None  # dataset directory in the export layout

    def factor_schema(self) -> FactorSchema:
        return parse_schema_spec(self.schema, self.image_size, self.channels)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "image_size": list(self.image_size),
            "channels": self.channels,
            "seed": self.seed,
            "root": self.root,
        }


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 64
    pretrain_epochs: int = 30
    pretrain_lr: float = 3e-4
    ct_epochs: int = 60
    ct_lr: float = 1e-4
    commitment_weight_pretrain: float = 0.25
    commitment_weight_finetune: float = 0.1
    train_samples_per_action: int = 1
    eval_every: int = 0  # epochs between validation accuracy probes; 0 = off
    early_stop_patience: int = 0  # probes without improvement; 0 = run all epochs
    max_steps: int = 0  # hard step cap for stage 2; 0 = no cap

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "batch_size": self.batch_size,
            "pretrain_epochs": self.pretrain_epochs,
            "pretrain_lr": self.pretrain_lr,
            "ct_epochs": self.ct_epochs,
            "ct_lr": self.ct_lr,
            "commitment_weight_pretrain": self.commitment_weight_pretrain,
            "commitment_weight_finetune": self.commitment_weight_finetune,
            "train_samples_per_action": self.train_samples_per_action,
            "eval_every": self.eval_every,
            "early_stop_patience": self.early_stop_patience,
            "max_steps": self.max_steps,
        }


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    mcqvae: dict = field(default_factory=dict)  # overrides for McqVaeConfig
    ct: dict = field(default_factory=dict)  # overrides for CtConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: LossWeights = field(default_factory=LossWeights)

    def mcqvae_config(self, schema: Optional[FactorSchema] = None) -> McqVaeConfig:
        """Model config; image dims come from the dataset schema when given."""
        base = {
            "image_size": tuple(schema.image_size if schema else self.data.image_size),
            "channels": schema.channels if schema else self.data.channels,
        }
        base.update(self.mcqvae)
        base["image_size"] = tuple(base["image_size"])
        return McqVaeConfig(**base)

    def ct_config(self, num_actions: int, mcqvae_cfg: Optional[McqVaeConfig] = None) -> CtConfig:
        mc = mcqvae_cfg or self.mcqvae_config()
        overrides = dict(self.ct)
        noise = overrides.pop("noise", {"mode": "none", "scale": 0.1})
        base = {
            "num_actions": num_actions,
            "num_nodes": mc.num_nodes,
            "sub_dim": mc.embedding_dim // mc.num_codebooks,
            "codebook_size": mc.codebook_size,
        }
        base.update(overrides)
        return CtConfig(noise=NoiseConfig(**noise), **base)

    def to_dict(self) -> dict:
        return {
            "data": self.data.to_dict(),
            "mcqvae": dict(self.mcqvae),
            "ct": dict(self.ct),
            "train": self.train.to_dict(),
            "weights": self.weights.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw or {})
        data = raw.get("data", {}) or {}
        if "image_size" in data:
            data["image_size"] = tuple(data["image_size"])
        train = raw.get("train", {}) or {}
        weights = raw.get("weights", {}) or {}
        return cls(
            data=DataConfig(**data),
            mcqvae=dict(raw.get("mcqvae", {}) or {}),
            ct=dict(raw.get("ct", {}) or {}),
            train=TrainConfig(**train),
            weights=LossWeights(**weights) if weights else LossWeights(),
        )

    @classmethod
    def from_yaml(cls, path) -> "RunConfig":
        raw = yaml.safe_load(Path(path).read_text())
        return cls.from_dict(raw)

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        """Apply dotted-key overrides, e.g. {"train.ct_epochs": "10"}."""
        raw = self.to_dict()
        for key, value in overrides.items():
            section, _, name = key.partition(".")
            if not name or section not in raw:
                raise ValueError(f"unknown config key {key!r}")
            parsed = yaml.safe_load(value)
            if isinstance(raw[section], dict):
                raw[section][name] = parsed
            else:
                raise ValueError(f"cannot override {key!r}")
        return RunConfig.from_dict(raw)

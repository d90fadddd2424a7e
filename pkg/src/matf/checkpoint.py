"""Versioned checkpoint container: named parameter arrays plus the ModelConfig."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import torch

from .config import ConfigError, ModelConfig

FORMAT = "matf.checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    state_dict: dict
    role: str = "generator"  # or "discriminator"
    variant: str = "multi_agent_scene"
    train_config: dict = field(default_factory=dict)
    loss_log: list = field(default_factory=list)

    def build(self):
        from .model import MATF

        if self.role != "generator":
            raise ConfigError(f"cannot build a predictor from a {self.role} checkpoint")
        model = MATF(self.config, self.variant)
        dtype = next(iter(self.state_dict.values())).dtype
        model.to(dtype)
        model.load_state_dict(self.state_dict)
        return model.eval()


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    torch.save({
        "format": FORMAT, "version": VERSION, "config": ckpt.config.to_dict(), "role": ckpt.role,
        "variant": ckpt.variant, "train_config": ckpt.train_config, "loss_log": ckpt.loss_log,
        "state_dict": {k: v.detach().clone() for k, v in ckpt.state_dict.items()},
    }, path)
    return path


def load_checkpoint(path, expect: Optional[ModelConfig] = None) -> Checkpoint:
    """Load a checkpoint; raises ConfigError on format or config mismatch."""
    obj = torch.load(Path(path), map_location="cpu", weights_only=True)
    if not isinstance(obj, dict) or obj.get("format") != FORMAT:
        raise ConfigError(f"{path}: not a {FORMAT} file")
    if obj.get("version") != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {obj.get('version')}")
    cfg = ModelConfig.from_dict(obj["config"])
    if expect is not None and cfg != expect:
        diff = {k: (v, expect.to_dict()[k]) for k, v in cfg.to_dict().items() if expect.to_dict()[k] != v}
        raise ConfigError(f"{path}: checkpoint config differs from expected: {diff}")
    return Checkpoint(cfg, obj["state_dict"], obj["role"], obj["variant"], obj["train_config"], obj["loss_log"])

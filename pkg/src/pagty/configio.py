"""Canonical-text (JSON) config files holding model and train sections."""

import json
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig


def dump_configs(model_config: ModelConfig, train_config: TrainConfig) -> str:
    payload = {"model": model_config.to_dict(), "train": train_config.to_dict()}
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def load_configs(path) -> tuple[ModelConfig, TrainConfig]:
    """Read a config file; the train section is optional (defaults apply)."""
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if "model" not in payload:
        raise ConfigError(f"config {path} is missing the 'model' section")
    model = ModelConfig.from_dict(payload["model"])
    train = TrainConfig.from_dict(payload.get("train", {}))
    return model, train

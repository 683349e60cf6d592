"""Configuration management."""

import logging
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel
from pydantic_settings import BaseSettings, SettingsConfigDict

from neural_globopt.models import Config

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Run-level settings read from ``NEURAL_GLOBOPT_*`` environment variables."""

    model_config = SettingsConfigDict(env_prefix="NEURAL_GLOBOPT_")

    runs_dir: Path = Path("runs")
    log_level: str = "WARNING"
    threads: int = 1


def load_config(config_path: Path | None = None) -> Config:
    """Load configuration from YAML file or use defaults."""
    if config_path and config_path.exists():
        with open(config_path) as f:
            config_data = yaml.safe_load(f) or {}
        logger.debug(f"Loaded configuration from {config_path}")
        return Config(**config_data)
    return Config()


def config_data(model: BaseModel) -> dict[str, Any]:
    """Plain JSON-compatible form of a configuration model."""
    return model.model_dump(mode="json")


def save_config(config: Config, config_path: Path) -> None:
    """Save configuration to YAML file."""
    config_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config_path, "w") as f:
        yaml.dump(config_data(config), f, default_flow_style=False, sort_keys=False)

"""Checkpoint directories: parameters, configs, counts and optimizer state."""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

from pydantic import ValidationError

from neural_globopt.autodiff.params import ParamStore
from neural_globopt.exceptions import CheckpointError, CorruptManifestError, ShapeMismatchError
from neural_globopt.model.network import expected_shapes, param_count
from neural_globopt.models import LossConfig, ModelConfig
from neural_globopt.trainer.optim import AbstractOptimizer

logger = logging.getLogger(__name__)

PARAMS_FILE = "params.bin"
MODEL_CONFIG_FILE = "model_config.json"
LOSS_CONFIG_FILE = "loss_config.json"
PARAM_COUNT_FILE = "param_count.json"
OPTIMIZER_FILE = "optimizer_state.bin"
TRAIN_STATE_FILE = "train_state.json"

_CHECKPOINT_DIR = re.compile(r"^checkpoint-(\d+)$")


@dataclass
class Checkpoint:
    """A loaded checkpoint directory."""

    params: ParamStore
    model_config: ModelConfig
    loss_config: LossConfig
    epoch: int = 0
    optimizer: str | None = None
    optimizer_steps: int = 0
    optimizer_state: ParamStore | None = None


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_checkpoint(
    path: Path,
    params: ParamStore,
    model_config: ModelConfig,
    loss_config: LossConfig | None = None,
    *,
    optimizer: AbstractOptimizer | None = None,
    epoch: int = 0,
) -> Path:
    """Write a checkpoint directory; returns ``path``."""
    path.mkdir(parents=True, exist_ok=True)
    _write_atomic(path / PARAMS_FILE, params.state_bytes())
    (path / MODEL_CONFIG_FILE).write_text(model_config.model_dump_json(indent=2))
    (path / LOSS_CONFIG_FILE).write_text((loss_config or LossConfig()).model_dump_json(indent=2))
    (path / PARAM_COUNT_FILE).write_text(param_count(params).model_dump_json(indent=2))
    state: dict[str, object] = {"epoch": epoch}
    if optimizer is not None:
        _write_atomic(path / OPTIMIZER_FILE, optimizer.state_store().state_bytes())
        state |= {"optimizer": optimizer.name, "optimizer_steps": optimizer.steps}
    (path / TRAIN_STATE_FILE).write_text(json.dumps(state, indent=2))
    logger.info(f"Saved checkpoint to {path}")
    return path


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"Missing checkpoint file {path}") from e


def _read_json(path: Path) -> dict[str, object]:
    try:
        data = json.loads(_read_bytes(path))
    except ValueError as e:
        raise CorruptManifestError(f"Unreadable {path.name}: {e}") from e
    if not isinstance(data, dict):
        raise CorruptManifestError(f"{path.name} must contain a JSON object")
    return data


def load_checkpoint(path: Path, expected: ModelConfig | None = None) -> Checkpoint:
    """Load a checkpoint directory.

    With ``expected`` given, every stored tensor must have the shape that
    configuration implies; nothing is returned on a mismatch.
    """
    params = ParamStore.from_bytes(_read_bytes(path / PARAMS_FILE))
    try:
        model_config = ModelConfig.model_validate(_read_json(path / MODEL_CONFIG_FILE))
        loss_path = path / LOSS_CONFIG_FILE
        loss_config = (
            LossConfig.model_validate(_read_json(loss_path)) if loss_path.exists() else LossConfig()
        )
    except ValidationError as e:
        raise CorruptManifestError(f"Invalid config sidecar in {path}: {e}") from e

    target = expected or model_config
    stored = params.shapes()
    for name, shape in expected_shapes(target).items():
        found = stored.get(name)
        if found is None:
            raise CheckpointError(f"Checkpoint has no tensor '{name}'")
        if found != shape:
            raise ShapeMismatchError(name, shape, found)
    if len(stored) != len(expected_shapes(target)):
        raise CheckpointError("Checkpoint holds tensors the model does not use")

    if params.dtype != target.np_dtype:
        params = params.astype(target.np_dtype)

    state = _read_json(path / TRAIN_STATE_FILE) if (path / TRAIN_STATE_FILE).exists() else {}
    optimizer_state = None
    if (path / OPTIMIZER_FILE).exists():
        optimizer_state = ParamStore.from_bytes(_read_bytes(path / OPTIMIZER_FILE))
    epoch = state.get("epoch", 0)
    steps = state.get("optimizer_steps", 0)
    optimizer = state.get("optimizer")
    return Checkpoint(
        params=params,
        model_config=expected or model_config,
        loss_config=loss_config,
        epoch=epoch if isinstance(epoch, int) else 0,
        optimizer=optimizer if isinstance(optimizer, str) else None,
        optimizer_steps=steps if isinstance(steps, int) else 0,
        optimizer_state=optimizer_state,
    )


def checkpoint_dir(run_dir: Path, epoch: int) -> Path:
    """Directory name for the checkpoint taken after ``epoch``."""
    return run_dir / f"checkpoint-{epoch:07d}"


def latest_checkpoint(run_dir: Path) -> Path | None:
    """Checkpoint directory with the highest epoch under ``run_dir``."""
    if not run_dir.is_dir():
        return None
    found = [
        (int(m.group(1)), p)
        for p in run_dir.iterdir()
        if p.is_dir() and (m := _CHECKPOINT_DIR.match(p.name)) and (p / PARAMS_FILE).exists()
    ]
    return max(found)[1] if found else None

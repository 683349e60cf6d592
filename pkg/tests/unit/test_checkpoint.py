"""Unit tests for neural_globopt.trainer.checkpoint module."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from neural_globopt.exceptions import CheckpointError, CorruptManifestError, ShapeMismatchError
from neural_globopt.model.network import build_params
from neural_globopt.models import LossConfig, ModelConfig
from neural_globopt.trainer.checkpoint import (
    MODEL_CONFIG_FILE,
    PARAM_COUNT_FILE,
    PARAMS_FILE,
    checkpoint_dir,
    latest_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from neural_globopt.trainer.optim import Adam


class TestSaveLoad:
    """Tests for writing and reading checkpoint directories."""

    def test_restores_parameters_and_state(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test parameters, configs, epoch and optimizer state survive a save."""
        params = build_params(tiny_model_config, seed=9)
        opt = Adam(params, lr=0.01)
        opt.step({name: np.ones_like(v.data) for name, v in params.items()})
        path = save_checkpoint(
            tmp_path / "ckpt", params, tiny_model_config, LossConfig(alpha_traj=0.25), optimizer=opt, epoch=12
        )

        loaded = load_checkpoint(path)
        assert loaded.params.equals(params)
        assert loaded.model_config == tiny_model_config
        assert loaded.loss_config.alpha_traj == 0.25
        assert loaded.epoch == 12
        assert loaded.optimizer == "adam"
        assert loaded.optimizer_steps == 1
        assert loaded.optimizer_state is not None
        assert loaded.optimizer_state.equals(opt.state_store())

    def test_param_count_sidecar(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test the parameter report is written next to the tensors."""
        path = save_checkpoint(tmp_path / "ckpt", build_params(tiny_model_config), tiny_model_config)
        report = json.loads((path / PARAM_COUNT_FILE).read_text())
        assert report["total"] == build_params(tiny_model_config).total_count
        assert set(report["delta"]) == {"main_encoder", "iterator", "updater", "total"}

    def test_without_optimizer(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test a parameters-only checkpoint loads with epoch 0 and no state."""
        path = save_checkpoint(tmp_path / "ckpt", build_params(tiny_model_config), tiny_model_config)
        loaded = load_checkpoint(path)
        assert loaded.epoch == 0
        assert loaded.optimizer is None
        assert loaded.optimizer_state is None

    def test_shape_mismatch(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test loading against a different architecture names the tensor."""
        path = save_checkpoint(tmp_path / "ckpt", build_params(tiny_model_config), tiny_model_config)
        wider = tiny_model_config.model_copy(update={"iter_hidden": 32})
        with pytest.raises(ShapeMismatchError) as excinfo:
            load_checkpoint(path, expected=wider)
        assert excinfo.value.name == "iterator.hidden.weight"
        assert excinfo.value.expected == (10, 32)
        assert excinfo.value.found == (10, 16)

    def test_truncated_params(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test a truncated tensor file raises CorruptManifestError."""
        path = save_checkpoint(tmp_path / "ckpt", build_params(tiny_model_config), tiny_model_config)
        blob = (path / PARAMS_FILE).read_bytes()
        (path / PARAMS_FILE).write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CorruptManifestError):
            load_checkpoint(path)

    def test_invalid_config_sidecar(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test an invalid model configuration raises CorruptManifestError."""
        path = save_checkpoint(tmp_path / "ckpt", build_params(tiny_model_config), tiny_model_config)
        (path / MODEL_CONFIG_FILE).write_text(json.dumps({"d_model": -3}))
        with pytest.raises(CorruptManifestError):
            load_checkpoint(path)

    def test_missing_directory(self, tmp_path: Path) -> None:
        """Test a missing checkpoint raises CheckpointError."""
        with pytest.raises(CheckpointError, match="Missing"):
            load_checkpoint(tmp_path / "nowhere")


class TestLatestCheckpoint:
    """Tests for checkpoint discovery."""

    def test_picks_highest_epoch(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test the newest complete checkpoint wins."""
        params = build_params(tiny_model_config)
        for epoch in (2, 10, 4):
            save_checkpoint(checkpoint_dir(tmp_path, epoch), params, tiny_model_config, epoch=epoch)
        checkpoint_dir(tmp_path, 99).mkdir()
        assert latest_checkpoint(tmp_path) == checkpoint_dir(tmp_path, 10)

    def test_empty_run_dir(self, tmp_path: Path) -> None:
        """Test None when no checkpoint exists."""
        assert latest_checkpoint(tmp_path) is None
        assert latest_checkpoint(tmp_path / "missing") is None

    def test_directory_name(self, tmp_path: Path) -> None:
        """Test epochs are zero-padded in directory names."""
        assert checkpoint_dir(tmp_path, 42).name == "checkpoint-0000042"

"""Shared test fixtures for neural-globopt tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from neural_globopt.funcgen import Case, make_case
from neural_globopt.model.trajectory import ModelInputs
from neural_globopt.models import PRESETS, LossConfig, ModelConfig, TrainConfig
from neural_globopt.seeding import Namespace, case_seed


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    """Float64 toy model over five samples, for exact checks."""
    return ModelConfig(d_model=8, d_edv=8, iter_hidden=16, n_samples=5, t_max=6, dtype="float64")


@pytest.fixture
def small_model_config() -> ModelConfig:
    """Small model that consumes the 40-sample presets."""
    return ModelConfig(d_model=8, d_edv=8, iter_hidden=16, n_samples=40, t_max=5)


@pytest.fixture
def small_train_config(tmp_path: Path) -> TrainConfig:
    """Three-epoch training run writing into a temporary directory."""
    return TrainConfig(
        epochs=3,
        batch_size=2,
        learning_rate=1e-3,
        preset="nightmare",
        seed=1,
        checkpoint_every=2,
        run_dir=tmp_path / "run",
        deterministic_log=True,
    )


@pytest.fixture
def loss_config() -> LossConfig:
    """Default trajectory loss weights."""
    return LossConfig()


@pytest.fixture
def toy_inputs() -> ModelInputs:
    """Five hand-written samples with a start at 0.5."""
    return ModelInputs(
        xs=np.array([0.0, 0.2, 0.45, 0.7, 1.0]),
        ys=np.array([1.0, 0.3, -0.2, 0.4, 1.1]),
        dys=np.array([-4.0, -2.0, 0.5, 2.0, 3.0]),
        cs=np.array([0.9, 0.4, -0.1, 0.3, 1.0]),
        x0=0.5,
    )


@pytest.fixture
def nightmare_case() -> Case:
    """First evaluation case of seed 0 on the nightmare preset."""
    return make_case(PRESETS["nightmare"], case_seed(0, Namespace.EVAL, 0))

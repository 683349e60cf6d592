"""Unit tests for neural_globopt.trainer.core module."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from pytest_mock import MockerFixture

from neural_globopt.autodiff.value import constant
from neural_globopt.exceptions import GenerationFailedError, InvalidArgumentError, NumericError
from neural_globopt.model.network import build_params
from neural_globopt.models import LossConfig, ModelConfig, TrainConfig
from neural_globopt.seeding import Namespace, namespace_of
from neural_globopt.trainer import core
from neural_globopt.trainer.checkpoint import checkpoint_dir, load_checkpoint
from neural_globopt.trainer.core import (
    LOG_FILE,
    LOG_HEADER,
    MemberResult,
    Trainer,
    member_pass,
    reduce_gradients,
    smoothed_trend,
    train,
    training_case,
)


class TestSmoothedTrend:
    """Tests for smoothed_trend."""

    def test_decreasing_losses(self) -> None:
        """Test a falling loss curve has rank correlation -1."""
        losses = [float(v) for v in range(100, 0, -1)]
        smoothed, rho = smoothed_trend(losses, window=10)
        assert smoothed.size == 91
        assert smoothed[0] == pytest.approx(95.5)
        assert rho == pytest.approx(-1.0)

    def test_needs_more_losses_than_window(self) -> None:
        """Test a window as long as the curve is rejected."""
        with pytest.raises(InvalidArgumentError):
            smoothed_trend([1.0] * 50, window=50)


class TestBatchPieces:
    """Tests for case selection and gradient reduction."""

    def test_reduce_gradients_averages(self) -> None:
        """Test member gradients are averaged per tensor."""
        members = [
            MemberResult(seed=1, loss=0.0, error=0.0, grads={"w": np.array([1.0, 2.0])}),
            MemberResult(seed=2, loss=0.0, error=0.0, grads={"w": np.array([3.0, 4.0])}),
        ]
        assert reduce_gradients(members)["w"].tolist() == [2.0, 3.0]

    def test_training_case_is_deterministic(self, small_train_config: TrainConfig) -> None:
        """Test the same (epoch, member) always yields the same training case."""
        a = training_case(small_train_config, 3, 1)
        b = training_case(small_train_config, 3, 1)
        assert a.seed == b.seed
        assert namespace_of(a.seed) is Namespace.TRAIN
        assert training_case(small_train_config, 3, 0).seed != a.seed

    def test_training_case_retries(self, small_train_config: TrainConfig, mocker: MockerFixture) -> None:
        """Test a failed generation is retried under a new seed."""
        real = core.make_case
        calls: list[int] = []

        def flaky(preset, seed):  # type: ignore[no-untyped-def]
            calls.append(seed)
            if len(calls) == 1:
                raise GenerationFailedError(1000, seed)
            return real(preset, seed)

        mocker.patch.object(core, "make_case", side_effect=flaky)
        case = training_case(small_train_config, 1, 0)
        assert len(calls) == 2
        assert calls[0] != calls[1]
        assert case.seed == calls[1]

    def test_member_pass_gradients(self, small_train_config: TrainConfig, small_model_config: ModelConfig) -> None:
        """Test one member returns a finite loss and a gradient per parameter."""
        params = build_params(small_model_config)
        case = training_case(small_train_config, 1, 0)
        result = member_pass(case, params, small_model_config, LossConfig(), epoch=1)
        assert np.isfinite(result.loss)
        assert 0.0 <= result.error <= 1.0
        assert set(result.grads) == set(params)
        assert not params["iterator.step_head.bias"].grad.any()

    def test_member_pass_non_finite_loss(
        self, small_train_config: TrainConfig, small_model_config: ModelConfig, mocker: MockerFixture
    ) -> None:
        """Test a NaN loss raises NumericError with the epoch and case seed."""
        mocker.patch.object(core, "trajectory_loss", return_value=constant(float("nan")))
        case = training_case(small_train_config, 2, 0)
        with pytest.raises(NumericError) as excinfo:
            member_pass(case, build_params(small_model_config), small_model_config, LossConfig(), epoch=2)
        assert excinfo.value.epoch == 2
        assert excinfo.value.case_seed == case.seed


class TestTrainer:
    """Tests for the training loop."""

    def test_preset_must_match_model(self, small_train_config: TrainConfig, tiny_model_config: ModelConfig) -> None:
        """Test a model sized for five samples cannot train on 40-sample cases."""
        with pytest.raises(InvalidArgumentError, match="samples"):
            Trainer(small_train_config, LossConfig(), tiny_model_config)

    def test_writes_log_and_checkpoints(self, small_train_config: TrainConfig, small_model_config: ModelConfig) -> None:
        """Test three epochs give three log rows and checkpoints at epochs 2 and 3."""
        result = train(small_train_config, LossConfig(), small_model_config, show_progress=False)
        run_dir = small_train_config.run_dir
        lines = (run_dir / LOG_FILE).read_text().splitlines()
        assert lines[0] == LOG_HEADER
        assert [line.split(",")[0] for line in lines[1:]] == ["1", "2", "3"]
        assert all(line.endswith(",0.000") for line in lines[1:])
        assert [r.epoch for r in result.records] == [1, 2, 3]
        assert result.checkpoint == checkpoint_dir(run_dir, 3)
        assert checkpoint_dir(run_dir, 2).is_dir()
        assert not result.params.equals(build_params(small_model_config, seed=small_train_config.seed))

    def test_zero_learning_rate_keeps_parameters(
        self, small_train_config: TrainConfig, small_model_config: ModelConfig
    ) -> None:
        """Test one epoch at learning rate 0 leaves every parameter byte-identical."""
        cfg = small_train_config.model_copy(update={"epochs": 1, "learning_rate": 0.0})
        result = train(cfg, LossConfig(), small_model_config, show_progress=False)
        initial = build_params(small_model_config, seed=cfg.seed)
        assert result.params.equals(initial)
        assert result.params.state_bytes() == initial.state_bytes()
        assert result.records[0].loss > 0.0

    def test_runs_are_reproducible(
        self, small_train_config: TrainConfig, small_model_config: ModelConfig, tmp_path: Path
    ) -> None:
        """Test two runs with one seed write identical logs and parameters."""
        first = train(small_train_config, LossConfig(), small_model_config, show_progress=False)
        other = small_train_config.model_copy(update={"run_dir": tmp_path / "again"})
        second = train(other, LossConfig(), small_model_config, show_progress=False)
        assert (tmp_path / "again" / LOG_FILE).read_bytes() == (small_train_config.run_dir / LOG_FILE).read_bytes()
        assert first.params.equals(second.params)

    def test_threads_do_not_change_results(
        self, small_train_config: TrainConfig, small_model_config: ModelConfig, tmp_path: Path
    ) -> None:
        """Test parallel batch members reduce to the same update."""
        serial = train(small_train_config, LossConfig(), small_model_config, show_progress=False)
        threaded_cfg = small_train_config.model_copy(update={"run_dir": tmp_path / "threaded", "threads": 2})
        threaded = train(threaded_cfg, LossConfig(), small_model_config, show_progress=False)
        assert serial.params.equals(threaded.params)

    def test_resume_matches_uninterrupted_run(
        self, small_train_config: TrainConfig, small_model_config: ModelConfig, tmp_path: Path
    ) -> None:
        """Test stopping after epoch 2 and resuming to 4 equals running 4 epochs."""
        full_cfg = small_train_config.model_copy(update={"epochs": 4, "run_dir": tmp_path / "full"})
        full = train(full_cfg, LossConfig(), small_model_config, show_progress=False)

        part_cfg = small_train_config.model_copy(update={"epochs": 2, "run_dir": tmp_path / "part"})
        train(part_cfg, LossConfig(), small_model_config, show_progress=False)
        resumed = train(
            part_cfg.model_copy(update={"epochs": 4}),
            LossConfig(),
            small_model_config,
            resume=True,
            show_progress=False,
        )

        assert resumed.params.equals(full.params)
        assert (tmp_path / "part" / LOG_FILE).read_bytes() == (tmp_path / "full" / LOG_FILE).read_bytes()
        assert load_checkpoint(resumed.checkpoint).optimizer_steps == 4  # type: ignore[arg-type]

    def test_resume_without_checkpoint(self, small_train_config: TrainConfig, small_model_config: ModelConfig) -> None:
        """Test resume is a no-op on an empty run directory."""
        trainer = Trainer(small_train_config, LossConfig(), small_model_config)
        assert trainer.resume() is False
        assert trainer.start_epoch == 1

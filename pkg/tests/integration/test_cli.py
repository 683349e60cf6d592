"""
Integration tests for the neural-globopt command line.

Every command is pointed at tmp_path so nothing lands in the working tree.
Training runs use a narrow model so the full train -> eval -> demo chain
finishes in seconds.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from pytest_mock import MockerFixture
from typer.testing import CliRunner

from neural_globopt import __version__
from neural_globopt.cli import EXIT_RUNTIME, EXIT_USAGE, MANIFEST_FILE, app, main
from neural_globopt.config import load_config, save_config
from neural_globopt.exceptions import GenerationFailedError, NumericError
from neural_globopt.models import Config, EvalReport, ModelConfig
from neural_globopt.trainer.checkpoint import checkpoint_dir
from neural_globopt.trainer.core import LOG_FILE

runner = CliRunner()


@pytest.fixture
def small_config_file(tmp_path: Path) -> Path:
    """A configuration with a narrow model and short trajectories."""
    path = tmp_path / "small.yaml"
    save_config(Config(model=ModelConfig(d_model=8, d_edv=8, iter_hidden=16, t_max=5)), path)
    return path


def _train(config_file: Path, run_dir: Path, epochs: int = 2) -> None:
    result = runner.invoke(
        app,
        [
            "train",
            "--config", str(config_file),
            "--epochs", str(epochs),
            "--batch", "2",
            "--seed", "1",
            "--checkpoint-every", "1",
            "-o", str(run_dir),
        ],
    )  # fmt: skip
    assert result.exit_code == 0, result.output


class TestInformationalCommands:
    """Tests for commands that only report."""

    def test_version(self) -> None:
        """Test the version string is printed."""
        result = runner.invoke(app, ["version"])
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_params_default_architecture(self, tmp_path: Path) -> None:
        """Test the audit of the default model writes the exact counts."""
        result = runner.invoke(app, ["params", "-o", str(tmp_path)])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "param_count.json").read_text())
        assert report["main_encoder"] == 400_270
        assert report["iterator"] == 17_669
        assert report["updater"] == 823_880
        assert report["total"] == 1_241_819
        assert report["delta"]["total"] == 1_241_819 - 1_290_846

    def test_gradcheck_primitives(self, tmp_path: Path) -> None:
        """Test the primitive gradient suites pass from the command line."""
        result = runner.invoke(app, ["gradcheck", "--trials", "3", "--seed", "1", "--skip-model", "-o", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "All gradient checks passed" in result.output
        assert json.loads((tmp_path / MANIFEST_FILE).read_text())["subcommand"] == "gradcheck"

    def test_baseline(self, tmp_path: Path) -> None:
        """Test the spline baseline statistics file."""
        result = runner.invoke(app, ["baseline", "-n", "3", "--seed", "2", "-o", str(tmp_path)])
        assert result.exit_code == 0, result.output
        stats = json.loads((tmp_path / "baseline.json").read_text())
        assert stats["n_cases"] == 3
        assert stats["preset"] == "nightmare"
        assert "Mean error" in result.output

    def test_init_writes_loadable_config(self, tmp_path: Path) -> None:
        """Test init writes YAML that load_config reads back."""
        path = tmp_path / "cfg.yaml"
        result = runner.invoke(app, ["init", "-o", str(path), "--preset", "hard"])
        assert result.exit_code == 0, result.output
        config = load_config(path)
        assert config.train.preset.name == "hard"
        assert config.eval.preset.name == "hard"


class TestCaseCommands:
    """Tests for gen and demo."""

    def test_gen_writes_cases_and_manifest(self, tmp_path: Path) -> None:
        """Test gen writes one JSON file per case and a manifest."""
        out = tmp_path / "cases"
        result = runner.invoke(app, ["gen", "-n", "3", "-s", "4", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert sorted(p.name for p in out.glob("case-*.json")) == [
            "case-0000.json",
            "case-0001.json",
            "case-0002.json",
        ]
        record = json.loads((out / "case-0000.json").read_text())
        assert len(record["xs"]) == 40
        assert record["preset"] == "nightmare"
        manifest = json.loads((out / MANIFEST_FILE).read_text())
        assert manifest["subcommand"] == "gen"
        assert manifest["seeds"] == {"seed": 4}

    def test_demo_without_model(self, tmp_path: Path) -> None:
        """Test demo prints the case summary and records the case seed."""
        result = runner.invoke(app, ["demo", "--seed", "7", "--preset", "nightmare", "-o", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "x* = " in result.output
        assert "x0 = " in result.output
        assert "spline error = " in result.output
        assert "x_T" not in result.output
        manifest = json.loads((tmp_path / MANIFEST_FILE).read_text())
        assert manifest["subcommand"] == "demo"
        assert manifest["seeds"]["seed"] == 7
        assert "case_seed" in manifest["seeds"]

    def test_demo_curve_csv(self, tmp_path: Path) -> None:
        """Test the dense curve export."""
        curve = tmp_path / "curve.csv"
        result = runner.invoke(app, ["demo", "--seed", "1", "--curve-csv", str(curve), "-o", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = curve.read_text().splitlines()
        assert lines[0] == "x,f,spline"
        assert len(lines) == 2002

    def test_demo_from_case_file(self, tmp_path: Path) -> None:
        """Test demo on a generated case file reports that case's minimiser."""
        out = tmp_path / "cases"
        assert runner.invoke(app, ["gen", "-n", "1", "-o", str(out)]).exit_code == 0
        case_file = out / "case-0000.json"
        x_star = json.loads(case_file.read_text())["argmin_true"]
        result = runner.invoke(app, ["demo", "--case-file", str(case_file), "-o", str(tmp_path / "demo")])
        assert result.exit_code == 0, result.output
        assert f"x* = {x_star:.6f}" in result.output


class TestTrainEvalFlow:
    """Tests for the train -> eval -> demo chain."""

    def test_train_writes_log_and_checkpoints(self, small_config_file: Path, tmp_path: Path) -> None:
        """Test a short run leaves a log, checkpoints and a manifest."""
        run_dir = tmp_path / "run"
        _train(small_config_file, run_dir)
        assert len((run_dir / LOG_FILE).read_text().splitlines()) == 3
        assert checkpoint_dir(run_dir, 1).is_dir()
        assert checkpoint_dir(run_dir, 2).is_dir()
        manifest = json.loads((run_dir / MANIFEST_FILE).read_text())
        assert manifest["subcommand"] == "train"
        assert manifest["config"]["train"]["epochs"] == 2
        assert manifest["config"]["model"]["d_model"] == 8

    def test_train_is_reproducible(self, small_config_file: Path, tmp_path: Path) -> None:
        """Test the same seed writes byte-identical training logs."""
        _train(small_config_file, tmp_path / "a")
        _train(small_config_file, tmp_path / "b")
        assert (tmp_path / "a" / LOG_FILE).read_bytes() == (tmp_path / "b" / LOG_FILE).read_bytes()

    def test_resume_extends_run(self, small_config_file: Path, tmp_path: Path) -> None:
        """Test --resume continues from the latest checkpoint."""
        run_dir = tmp_path / "run"
        _train(small_config_file, run_dir, epochs=1)
        result = runner.invoke(
            app,
            ["train", "-c", str(small_config_file), "-e", "2", "-b", "2", "-s", "1", "-o", str(run_dir), "--resume"],
        )
        assert result.exit_code == 0, result.output
        _train(small_config_file, tmp_path / "full", epochs=2)
        assert (run_dir / LOG_FILE).read_bytes() == (tmp_path / "full" / LOG_FILE).read_bytes()

    def test_eval_and_demo_with_checkpoint(self, small_config_file: Path, tmp_path: Path) -> None:
        """Test a trained checkpoint can be evaluated and demonstrated."""
        run_dir = tmp_path / "run"
        _train(small_config_file, run_dir)
        ckpt = checkpoint_dir(run_dir, 2)

        out = tmp_path / "eval"
        result = runner.invoke(app, ["eval", "-k", str(ckpt), "-n", "3", "-s", "5", "-o", str(out)])
        assert result.exit_code == 0, result.output
        report = EvalReport.model_validate_json((out / "report.json").read_text())
        assert report.verify()
        assert report.checkpoint == str(ckpt)
        assert len(report.cases) == 3
        for name in ("report.txt", "histogram.csv", "cases.jsonl", MANIFEST_FILE):
            assert (out / name).exists()

        result = runner.invoke(app, ["demo", "-s", "3", "-k", str(ckpt), "-o", str(tmp_path / "demo")])
        assert result.exit_code == 0, result.output
        assert '{"t": 0' in result.output
        assert "x_T = " in result.output
        assert "model error = " in result.output

    def test_eval_without_checkpoint(self, tmp_path: Path) -> None:
        """Test evaluating the spline alone gives zero improvement."""
        result = runner.invoke(app, ["eval", "-n", "2", "-o", str(tmp_path), "--no-cases"])
        assert result.exit_code == 0, result.output
        report = EvalReport.model_validate_json((tmp_path / "report.json").read_text())
        assert report.aggregates.improvement == 0.0
        assert report.checkpoint is None
        assert not (tmp_path / "cases.jsonl").exists()


class TestExitCodes:
    """Tests for the exit code contract."""

    def test_unknown_preset_is_usage_error(self, tmp_path: Path) -> None:
        """Test an invalid preset exits 1 with the validation message."""
        result = runner.invoke(app, ["gen", "--preset", "bogus", "-o", str(tmp_path)])
        assert result.exit_code == EXIT_USAGE
        assert "Unknown preset" in result.output

    def test_numeric_failure_is_runtime_error(
        self, small_config_file: Path, tmp_path: Path, mocker: MockerFixture
    ) -> None:
        """Test a NumericError during training exits 2."""
        mocker.patch("neural_globopt.cli.train", side_effect=NumericError("loss is nan", epoch=3))
        result = runner.invoke(app, ["train", "-c", str(small_config_file), "-o", str(tmp_path / "run")])
        assert result.exit_code == EXIT_RUNTIME
        assert "loss is nan" in result.output

    def test_demo_generation_failure_keeps_manifest(self, tmp_path: Path, mocker: MockerFixture) -> None:
        """Test a demo whose case cannot be generated exits 2 and still leaves its manifest."""
        mocker.patch("neural_globopt.cli.make_case", side_effect=GenerationFailedError(1000, 5))
        result = runner.invoke(app, ["demo", "--seed", "5", "-o", str(tmp_path)])
        assert result.exit_code == EXIT_RUNTIME
        assert "No acceptable function" in result.output
        manifest = json.loads((tmp_path / MANIFEST_FILE).read_text())
        assert manifest["subcommand"] == "demo"
        assert manifest["seeds"]["seed"] == 5
        assert "case_seed" in manifest["seeds"]

    def test_missing_checkpoint_is_runtime_error(self, tmp_path: Path) -> None:
        """Test a checkpoint that cannot be loaded exits 2."""
        result = runner.invoke(app, ["eval", "-k", str(tmp_path / "nowhere"), "-n", "1", "-o", str(tmp_path / "e")])
        assert result.exit_code == EXIT_RUNTIME

    def test_main_usage_errors(self) -> None:
        """Test main() maps unknown commands and options to exit 1."""
        assert main(["bogus"]) == EXIT_USAGE
        assert main(["train", "--bogus"]) == EXIT_USAGE
        assert main(["--log-level", "LOUD", "version"]) == EXIT_USAGE

    def test_main_success(self) -> None:
        """Test main() returns 0 for a successful command."""
        assert main(["version"]) == 0

    def test_main_runtime_error(self, tmp_path: Path) -> None:
        """Test main() propagates the runtime exit code."""
        assert main(["eval", "-k", str(tmp_path / "nowhere"), "-n", "1", "-o", str(tmp_path / "e")]) == EXIT_RUNTIME

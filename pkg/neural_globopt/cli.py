"""CLI interface for neural-globopt."""

import logging
import sys
from pathlib import Path
from typing import Annotated, Any, NoReturn, TypeVar

import click
import typer
from pydantic import BaseModel
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from neural_globopt import __version__
from neural_globopt.autodiff.gradcheck import run_gradcheck_suites
from neural_globopt.config import Settings, config_data, load_config, save_config
from neural_globopt.evaluator import (
    CASES_JSONL,
    HISTOGRAM_CSV,
    REPORT_JSON,
    REPORT_TEXT,
    evaluate,
    evaluation_seeds,
    print_summary,
    spline_baseline,
    write_curve_csv,
)
from neural_globopt.exceptions import GenerationFailedError
from neural_globopt.funcgen import make_case, read_case_file, write_case_file
from neural_globopt.model.network import build_params, param_count, run
from neural_globopt.model.trajectory import ModelInputs
from neural_globopt.models import Config, RunManifest
from neural_globopt.trainer.checkpoint import load_checkpoint
from neural_globopt.trainer.core import LOG_FILE, train

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="neural-globopt",
    help="Learned global optimizer for noisy 1D functions",
    add_completion=False,
)

console = Console()

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
MANIFEST_FILE = "manifest.json"

M = TypeVar("M", bound=BaseModel)

ConfigOption = Annotated[
    Path | None, typer.Option("--config", "-c", help="Configuration YAML file")
]
PresetOption = Annotated[
    str | None,
    typer.Option("--preset", "-p", help="Preset: smooth, easy, medium, hard, nightmare"),
]
SeedOption = Annotated[int | None, typer.Option("--seed", "-s", help="Run seed")]
ThreadsOption = Annotated[int | None, typer.Option("--threads", "-j", help="Worker threads")]


def _fail(e: Exception) -> NoReturn:
    """Report ``e`` and exit: 1 for invalid input, 2 for numeric or runtime failures."""
    code = EXIT_USAGE if isinstance(e, ValueError | FileNotFoundError) else EXIT_RUNTIME
    console.print(f"[bold red]Error: {escape(str(e))}[/bold red]")
    raise typer.Exit(code) from e


def _with_overrides(model: M, **overrides: Any) -> M:
    """Revalidated copy of ``model`` with every non-None override applied."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    return type(model).model_validate({**model.model_dump(), **updates})


def _env_threads(settings: Settings) -> int | None:
    return settings.threads if "threads" in settings.model_fields_set else None


def _write_manifest(
    output_dir: Path,
    subcommand: str,
    config: dict[str, Any],
    *,
    seeds: dict[str, int],
    outputs: dict[str, Path],
    threads: int = 1,
) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        subcommand=subcommand,
        config=config,
        seeds=seeds,
        version=__version__,
        outputs={name: str(path) for name, path in outputs.items()},
        threads=threads,
    )
    path = output_dir / MANIFEST_FILE
    path.write_text(manifest.model_dump_json(indent=2))
    logger.debug(f"Wrote run manifest to {path}")
    return path


@app.callback()
def setup(
    log_level: Annotated[
        str | None, typer.Option("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    ] = None,
) -> None:
    """Learned global optimizer for noisy 1D functions."""
    level = (log_level or Settings().log_level).upper()
    level_names = (
        logging.getLevelNamesMapping()
        if sys.version_info >= (3, 11)
        else dict(logging._nameToLevel)
    )
    if level not in level_names:
        raise typer.BadParameter(f"Unknown log level '{log_level}'", param_hint="--log-level")
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@app.command()
def gen(
    preset: PresetOption = None,
    count: Annotated[int | None, typer.Option("--count", "-n", help="Number of cases")] = None,
    seed: SeedOption = None,
    output_dir: Annotated[
        Path | None, typer.Option("--output-dir", "-o", help="Directory for case files")
    ] = None,
    config: ConfigOption = None,
) -> None:
    """Generate case files: target function plus noisy samples."""
    try:
        cfg = load_config(config)
        ecfg = _with_overrides(cfg.eval, preset=preset, n_cases=count, seed=seed)
        out = output_dir or Settings().runs_dir / "cases"
        _write_manifest(
            out,
            "gen",
            {"eval": config_data(ecfg)},
            seeds={"seed": ecfg.seed},
            outputs={"cases": out},
        )
        written = 0
        for i, s in enumerate(evaluation_seeds(ecfg.seed, ecfg.n_cases)):
            try:
                write_case_file(make_case(ecfg.preset, s), out / f"case-{i:04d}.json")
                written += 1
            except GenerationFailedError as e:
                logger.warning(f"Skipping case {i}: {e}")
        console.print(f"[green]✓ Wrote {written} case files to {out}[/green]")
    except Exception as e:
        _fail(e)


@app.command("train")
def train_command(
    config: ConfigOption = None,
    epochs: Annotated[int | None, typer.Option("--epochs", "-e", help="Training epochs")] = None,
    batch: Annotated[int | None, typer.Option("--batch", "-b", help="Batch size")] = None,
    seed: SeedOption = None,
    learning_rate: Annotated[float | None, typer.Option("--lr", help="Learning rate")] = None,
    preset: PresetOption = None,
    optimizer: Annotated[
        str | None, typer.Option("--optimizer", help="adam or sgd_momentum")
    ] = None,
    threads: ThreadsOption = None,
    run_dir: Annotated[
        Path | None, typer.Option("--run-dir", "-o", help="Checkpoint and log directory")
    ] = None,
    checkpoint_every: Annotated[
        int | None, typer.Option("--checkpoint-every", help="Epochs between checkpoints")
    ] = None,
    resume: Annotated[
        bool, typer.Option("--resume", help="Continue from the latest checkpoint")
    ] = False,
    timed_log: Annotated[
        bool, typer.Option("--timed-log", help="Record wall-clock seconds in the log")
    ] = False,
) -> None:
    """Train the model on freshly generated problems."""
    try:
        cfg = load_config(config)
        tcfg = _with_overrides(
            cfg.train,
            epochs=epochs,
            batch_size=batch,
            seed=seed,
            learning_rate=learning_rate,
            preset=preset,
            optimizer=optimizer,
            threads=threads if threads is not None else _env_threads(Settings()),
            run_dir=run_dir,
            checkpoint_every=checkpoint_every,
            deterministic_log=not timed_log,
        )
        resolved = Config(model=cfg.model, loss=cfg.loss, train=tcfg, eval=cfg.eval)
        _write_manifest(
            tcfg.run_dir,
            "train",
            config_data(resolved),
            seeds={"seed": tcfg.seed},
            outputs={"log": tcfg.run_dir / LOG_FILE, "checkpoints": tcfg.run_dir},
            threads=tcfg.threads,
        )
        result = train(tcfg, resolved.loss, resolved.model, resume=resume, console=console)
    except Exception as e:
        _fail(e)

    console.print("\n[bold green]✓ Training complete[/bold green]")
    if result.records:
        last = result.records[-1]
        console.print(
            f"Epoch {last.epoch}: loss {last.loss:.5f}, mean error {last.mean_error:.2%}"
        )
    console.print(f"Checkpoint: {result.checkpoint}")
    console.print(f"Training curve: {tcfg.run_dir / LOG_FILE}")


@app.command("eval")
def eval_command(
    checkpoint: Annotated[
        Path | None,
        typer.Option("--checkpoint", "-k", help="Checkpoint directory (omit for the spline only)"),
    ] = None,
    preset: PresetOption = None,
    n_cases: Annotated[int | None, typer.Option("--n-cases", "-n", help="Cases")] = None,
    seed: SeedOption = None,
    output_dir: Annotated[
        Path | None, typer.Option("--output-dir", "-o", help="Report directory")
    ] = None,
    threads: ThreadsOption = None,
    no_cases: Annotated[
        bool, typer.Option("--no-cases", help=f"Skip writing {CASES_JSONL}")
    ] = False,
    config: ConfigOption = None,
) -> None:
    """Evaluate a checkpoint against the spline baseline on held-out cases."""
    try:
        cfg = load_config(config)
        ecfg = _with_overrides(
            cfg.eval,
            preset=preset,
            n_cases=n_cases,
            seed=seed,
            output_dir=output_dir,
            threads=threads if threads is not None else _env_threads(Settings()),
            write_cases=False if no_cases else None,
        )
        outputs = {
            "report_json": ecfg.output_dir / REPORT_JSON,
            "report_text": ecfg.output_dir / REPORT_TEXT,
            "histogram": ecfg.output_dir / HISTOGRAM_CSV,
        }
        if ecfg.write_cases:
            outputs["cases"] = ecfg.output_dir / CASES_JSONL
        _write_manifest(
            ecfg.output_dir,
            "eval",
            {"eval": config_data(ecfg), "checkpoint": str(checkpoint) if checkpoint else None},
            seeds={"seed": ecfg.seed},
            outputs=outputs,
            threads=ecfg.threads,
        )
        ckpt = load_checkpoint(checkpoint) if checkpoint is not None else None
        report = evaluate(
            ckpt,
            ecfg.preset,
            ecfg.n_cases,
            ecfg.seed,
            threads=ecfg.threads,
            output_dir=ecfg.output_dir,
            histogram_bin=ecfg.histogram_bin,
            write_cases=ecfg.write_cases,
            checkpoint_path=str(checkpoint) if checkpoint else None,
        )
    except Exception as e:
        _fail(e)

    print_summary(report, console)
    console.print(f"[green]✓ Reports written to {ecfg.output_dir}[/green]")


@app.command()
def demo(
    seed: Annotated[int, typer.Option("--seed", "-s", help="Demo seed")] = 0,
    preset: PresetOption = None,
    checkpoint: Annotated[
        str, typer.Option("--checkpoint", "-k", help="Checkpoint directory or 'none'")
    ] = "none",
    case_file: Annotated[
        Path | None, typer.Option("--case-file", help="Run on a case file instead of a seed")
    ] = None,
    curve_csv: Annotated[
        Path | None, typer.Option("--curve-csv", help="Write a dense x,f,spline CSV")
    ] = None,
    output_dir: Annotated[
        Path | None, typer.Option("--output-dir", "-o", help="Directory for the manifest")
    ] = None,
    config: ConfigOption = None,
) -> None:
    """Run one case and print x*, x0, the trajectory and the final error."""
    try:
        ecfg = _with_overrides(load_config(config).eval, preset=preset)
        out = output_dir or Settings().runs_dir / "demo"
        seeds = {"seed": seed}
        if case_file is None:
            seeds["case_seed"] = evaluation_seeds(seed, 1)[0]
        outputs: dict[str, Path] = {}
        if curve_csv is not None:
            outputs["curve"] = curve_csv
        _write_manifest(
            out,
            "demo",
            {
                "preset": config_data(ecfg.preset),
                "checkpoint": checkpoint,
                "case_file": str(case_file) if case_file is not None else None,
            },
            seeds=seeds,
            outputs=outputs,
        )
        case = (
            read_case_file(case_file)
            if case_file is not None
            else make_case(ecfg.preset, seeds["case_seed"])
        )

        console.print(f"x* = {case.x_star:.6f}")
        console.print(f"x0 = {case.x0:.6f}")
        console.print(f"spline error = {case.spline_error:.6f}")
        if checkpoint.lower() != "none":
            ckpt = load_checkpoint(Path(checkpoint))
            traj = run(ModelInputs.from_case(case), ckpt.params, ckpt.model_config)
            typer.echo(traj.to_jsonl(), nl=False)
            console.print(f"x_T = {traj.x_final:.6f}")
            console.print(f"model error = {abs(traj.x_final - case.x_star):.6f}")
            console.print(f"iterations = {traj.iterations} ({traj.stop_reason})")
        if curve_csv is not None:
            write_curve_csv(case, curve_csv)
            console.print(f"[green]✓ Curve written to {curve_csv}[/green]")
    except Exception as e:
        _fail(e)


@app.command()
def gradcheck(
    trials: Annotated[int, typer.Option("--trials", help="Random draws per suite")] = 100,
    seed: Annotated[int, typer.Option("--seed", "-s", help="Seed")] = 0,
    skip_model: Annotated[
        bool, typer.Option("--skip-model", help="Only the primitive suites")
    ] = False,
    output_dir: Annotated[
        Path | None, typer.Option("--output-dir", "-o", help="Directory for the manifest")
    ] = None,
) -> None:
    """Compare analytic gradients with central differences."""
    try:
        _write_manifest(
            output_dir or Settings().runs_dir / "gradcheck",
            "gradcheck",
            {"trials": trials, "include_model": not skip_model},
            seeds={"seed": seed},
            outputs={},
        )
        with console.status("Checking gradients..."):
            results = run_gradcheck_suites(trials=trials, seed=seed, include_model=not skip_model)
    except Exception as e:
        _fail(e)

    table = Table(title="Gradient checks")
    table.add_column("Suite")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("")
    for r in results:
        mark = "[green]✓[/green]" if r.passed else "[red]✗[/red]"
        table.add_row(r.name, f"{r.max_rel_error:.3e}", f"{r.threshold:.0e}", mark)
    console.print(table)

    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(f"[bold red]✗ Failed: {', '.join(failed)}[/bold red]")
        raise typer.Exit(EXIT_RUNTIME)
    console.print("[bold green]✓ All gradient checks passed[/bold green]")


@app.command()
def params(
    config: ConfigOption = None,
    checkpoint: Annotated[
        Path | None, typer.Option("--checkpoint", "-k", help="Count a saved checkpoint instead")
    ] = None,
    seed: Annotated[int, typer.Option("--seed", "-s", help="Initialisation seed")] = 0,
    output_dir: Annotated[
        Path | None, typer.Option("--output-dir", "-o", help="Directory for param_count.json")
    ] = None,
) -> None:
    """Audit parameter counts against the published figures."""
    try:
        cfg = load_config(config)
        out = output_dir or Settings().runs_dir / "params"
        _write_manifest(
            out,
            "params",
            {"model": config_data(cfg.model), "checkpoint": str(checkpoint) if checkpoint else None},
            seeds={"seed": seed},
            outputs={"param_count": out / "param_count.json"},
        )
        store = load_checkpoint(checkpoint).params if checkpoint else build_params(cfg.model, seed)
        report = param_count(store)
        (out / "param_count.json").write_text(
            report.model_dump_json(indent=2)
        )
    except Exception as e:
        _fail(e)

    table = Table(title="Parameter audit")
    table.add_column("Component")
    table.add_column("Audited", justify="right")
    table.add_column("Published", justify="right")
    table.add_column("Delta", justify="right")
    audited = {
        "main_encoder": report.main_encoder,
        "iterator": report.iterator,
        "updater": report.updater,
        "total": report.total,
    }
    for name, count in audited.items():
        published = report.published.get(name)
        table.add_row(
            name,
            f"{count:,}",
            f"{published:,}" if published is not None else "--",
            f"{report.delta[name]:+,}" if name in report.delta else "--",
        )
    console.print(table)


@app.command()
def baseline(
    preset: PresetOption = None,
    n_cases: Annotated[int, typer.Option("--n-cases", "-n", help="Cases")] = 500,
    seed: SeedOption = None,
    output_dir: Annotated[
        Path | None, typer.Option("--output-dir", "-o", help="Directory for baseline.json")
    ] = None,
    config: ConfigOption = None,
) -> None:
    """Spline-baseline error statistics; no model involved."""
    try:
        ecfg = _with_overrides(load_config(config).eval, preset=preset, seed=seed)
        out = output_dir or Settings().runs_dir / "baseline"
        _write_manifest(
            out,
            "baseline",
            {"preset": config_data(ecfg.preset), "n_cases": n_cases},
            seeds={"seed": ecfg.seed},
            outputs={"baseline": out / "baseline.json"},
        )
        stats = spline_baseline(ecfg.preset, n_cases, ecfg.seed)
        (out / "baseline.json").write_text(stats.model_dump_json(indent=2))
    except Exception as e:
        _fail(e)

    console.print(f"\n[bold]Spline baseline on {stats.n_cases} '{stats.preset}' cases[/bold]")
    console.print(f"Mean error: {stats.mean:.2%}")
    console.print(f"Median error: {stats.median:.2%}")
    console.print(f"Std deviation: {stats.std:.2%}")
    console.print(f"Success (<10%): {stats.success_10:.1%}")
    console.print(f"Success (<15%): {stats.success_15:.1%}")
    if stats.failures:
        console.print(f"[yellow]⚠ {stats.failures} cases failed to generate[/yellow]")


@app.command()
def init(
    output: Annotated[Path, typer.Option("--output", "-o", help="Output config file")] = Path(
        "neural-globopt.yaml"
    ),
    preset: PresetOption = None,
) -> None:
    """Initialize a configuration file."""
    try:
        config = Config()
        if preset is not None:
            config = Config(
                train=_with_overrides(config.train, preset=preset),
                eval=_with_overrides(config.eval, preset=preset),
            )
        save_config(config, output)
    except Exception as e:
        _fail(e)

    console.print(f"[green]✓ Configuration saved to {output}[/green]")
    console.print("\nEdit the file to adjust the model, training and evaluation settings.")
    console.print(f"\nRun with: neural-globopt train --config {output}")


@app.command()
def version() -> None:
    """Show version information."""
    console.print(f"neural-globopt version {__version__}")


def main(argv: list[str] | None = None) -> int:
    """Console entry point; usage errors exit 1, numeric and runtime failures exit 2."""
    try:
        result = app(args=argv, prog_name="neural-globopt", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

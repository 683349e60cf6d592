"""Held-out evaluation of a checkpoint against the spline baseline."""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.table import Table

from neural_globopt.exceptions import GenerationFailedError, InvalidArgumentError
from neural_globopt.funcgen import Case, make_case
from neural_globopt.model.network import run
from neural_globopt.model.trajectory import ModelInputs, StepRecord, Trajectory
from neural_globopt.models import (
    CaseFailure,
    CaseResult,
    DifficultyPreset,
    EvalReport,
    SplineBaselineStats,
)
from neural_globopt.seeding import Namespace, case_seed
from neural_globopt.spline import ORACLE_GRID, GridSpec, spline_eval
from neural_globopt.trainer.checkpoint import Checkpoint

logger = logging.getLogger(__name__)

Predictor = Callable[[ModelInputs], Trajectory]

REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
HISTOGRAM_CSV = "histogram.csv"
CASES_JSONL = "cases.jsonl"


def identity_predictor(inputs: ModelInputs) -> Trajectory:
    """A model that stays at the spline minimum."""
    step = StepRecord(t=0, x_t=inputs.x0, s_t=0.0, d_t=0.0, x_next=inputs.x0)
    return Trajectory(steps=[step], stop_reason="converged")


def checkpoint_predictor(checkpoint: Checkpoint) -> Predictor:
    """Predictor that runs the model stored in ``checkpoint``."""
    def predict(inputs: ModelInputs) -> Trajectory:
        return run(inputs, checkpoint.params, checkpoint.model_config)

    return predict


def evaluate_case(case: Case, predictor: Predictor) -> CaseResult:
    """Model and spline errors for one case."""
    traj = predictor(ModelInputs.from_case(case))
    x_final = traj.x_final
    f_final, f_star = case.target.evaluate([x_final, case.x_star])
    return CaseResult(
        seed=case.seed,
        x_star=case.x_star,
        x0=case.x0,
        x_final=x_final,
        spline_error=case.spline_error,
        model_error=abs(x_final - case.x_star),
        iterations=traj.iterations,
        stop_reason=traj.stop_reason,
        value_gap=float(f_final - f_star),
        trajectory=traj.xs(),
    )


def _generate(preset: DifficultyPreset, seed: int) -> Case | CaseFailure:
    try:
        return make_case(preset, seed)
    except GenerationFailedError as e:
        logger.warning(f"Skipping evaluation case {seed}: {e}")
        return CaseFailure(seed=seed, reason=str(e))


def evaluation_seeds(seed: int, n_cases: int) -> list[int]:
    """Case seeds in the evaluation namespace, disjoint from every training seed."""
    return [case_seed(seed, Namespace.EVAL, i) for i in range(n_cases)]


def evaluate(
    checkpoint: Checkpoint | None,
    preset: DifficultyPreset,
    n_cases: int,
    seed: int,
    *,
    predictor: Predictor | None = None,
    threads: int = 1,
    output_dir: Path | None = None,
    histogram_bin: float = 0.025,
    write_cases: bool = True,
    checkpoint_path: str | None = None,
) -> EvalReport:
    """Run the model and the spline baseline on ``n_cases`` fresh cases.

    Without a checkpoint or predictor the model is the identity (x_T = x0).
    Cases whose generation fails are listed in ``failures`` and skipped.
    """
    if n_cases < 1:
        raise InvalidArgumentError(f"n_cases must be at least 1, got {n_cases}")
    if checkpoint is not None:
        if checkpoint.model_config.n_samples != preset.n_samples:
            raise InvalidArgumentError(
                f"Checkpoint expects {checkpoint.model_config.n_samples} samples, "
                f"preset '{preset.name}' draws {preset.n_samples}"
            )
        predictor = predictor or checkpoint_predictor(checkpoint)
    predictor = predictor or identity_predictor

    def work(s: int) -> CaseResult | CaseFailure:
        case = _generate(preset, s)
        return case if isinstance(case, CaseFailure) else evaluate_case(case, predictor)

    seeds = evaluation_seeds(seed, n_cases)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, seeds))
    else:
        outcomes = [work(s) for s in seeds]

    results = [o for o in outcomes if isinstance(o, CaseResult)]
    failures = [o for o in outcomes if isinstance(o, CaseFailure)]
    if not results:
        raise GenerationFailedError(len(failures), seed)

    report = EvalReport.from_cases(
        results,
        preset=preset.name,
        seed=seed,
        n_requested=n_cases,
        checkpoint=checkpoint_path,
        failures=failures,
    )
    logger.info(
        f"Evaluated {len(results)} cases: model mean {report.aggregates.mean:.4f}, "
        f"spline mean {report.aggregates.spline_mean:.4f}"
    )
    if output_dir is not None:
        write_report(report, output_dir, histogram_bin=histogram_bin, write_cases=write_cases)
    return report


def spline_baseline(preset: DifficultyPreset, n_cases: int, seed: int) -> SplineBaselineStats:
    """|x0 - x*| statistics over fresh evaluation cases; no model involved."""
    if n_cases < 1:
        raise InvalidArgumentError(f"n_cases must be at least 1, got {n_cases}")
    errors: list[float] = []
    failures = 0
    for s in evaluation_seeds(seed, n_cases):
        case = _generate(preset, s)
        if isinstance(case, CaseFailure):
            failures += 1
        else:
            errors.append(case.spline_error)
    if not errors:
        raise GenerationFailedError(failures, seed)
    return SplineBaselineStats.compute(errors, preset=preset.name, seed=seed, failures=failures)


def error_histogram(
    model_errors: list[float], spline_errors: list[float], bin_width: float = 0.025
) -> list[tuple[float, float, int, int]]:
    """(bin_lo, bin_hi, model_count, spline_count) over [0, 1]; the last bin is closed."""
    n_bins = int(np.ceil(1.0 / bin_width - 1e-9))
    edges = np.minimum(np.arange(n_bins + 1) * bin_width, 1.0)
    model_counts, _ = np.histogram(model_errors, bins=edges)
    spline_counts, _ = np.histogram(spline_errors, bins=edges)
    return [
        (float(edges[i]), float(edges[i + 1]), int(model_counts[i]), int(spline_counts[i]))
        for i in range(n_bins)
    ]


def format_report(report: EvalReport) -> str:
    """Human-readable summary written to report.txt."""
    a = report.aggregates
    lines = [
        f"Evaluation on {len(report.cases)} '{report.preset}' cases (seed {report.seed})",
        f"Checkpoint: {report.checkpoint or 'none (spline baseline)'}",
        "",
        f"{'Metric':<22}{'Spline':>12}{'Model':>12}",
        f"{'Mean error':<22}{a.spline_mean:>12.2%}{a.mean:>12.2%}",
        f"{'Median error':<22}{a.spline_median:>12.2%}{a.median:>12.2%}",
        f"{'Std deviation':<22}{a.spline_std:>12.2%}{a.std:>12.2%}",
        f"{'Best case':<22}{'--':>12}{a.best:>12.2%}",
        f"{'Success (<10%)':<22}{a.spline_success_10:>12.1%}{a.success_10:>12.1%}",
        f"{'Success (<15%)':<22}{a.spline_success_15:>12.1%}{a.success_15:>12.1%}",
        "",
        f"Improvement: {a.improvement:+.2%}",
        f"Cases improved: {a.improved_fraction:.1%}",
        f"Best case seed: {a.best_seed}",
        "",
        "Supplemental (not part of the headline table):",
        f"  spline std deviation: {a.spline_std:.2%}",
        f"  spline success (<15%): {a.spline_success_15:.1%}",
        f"  mean value gap f(x_T) - f(x*): {a.value_gap_mean:.6g}",
    ]
    if report.failures:
        lines += ["", f"Skipped {len(report.failures)} cases whose generation failed:"]
        lines += [f"  {f.seed}: {f.reason}" for f in report.failures]
    return "\n".join(lines) + "\n"


def write_report(
    report: EvalReport, output_dir: Path, histogram_bin: float = 0.025, write_cases: bool = True
) -> dict[str, Path]:
    """Write report.json, report.txt, histogram.csv and (optionally) cases.jsonl."""
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report_json": output_dir / REPORT_JSON,
        "report_text": output_dir / REPORT_TEXT,
        "histogram": output_dir / HISTOGRAM_CSV,
    }
    paths["report_json"].write_text(report.model_dump_json(indent=2))
    paths["report_text"].write_text(format_report(report))

    bins = error_histogram(
        [c.model_error for c in report.cases],
        [c.spline_error for c in report.cases],
        histogram_bin,
    )
    rows = ["bin_lo,bin_hi,model_count,spline_count"]
    rows += [f"{lo:.6f},{hi:.6f},{m},{s}" for lo, hi, m, s in bins]
    paths["histogram"].write_text("\n".join(rows) + "\n")

    if write_cases:
        paths["cases"] = output_dir / CASES_JSONL
        paths["cases"].write_text("".join(c.model_dump_json() + "\n" for c in report.cases))
    logger.info(f"Wrote evaluation report to {output_dir}")
    return paths


def write_curve_csv(case: Case, path: Path, grid: GridSpec = ORACLE_GRID) -> Path:
    """Dense (x, f(x), spline(x)) table for plotting one case."""
    xs = grid.points()
    truth = case.target.evaluate(xs)
    fitted = spline_eval(case.fit, xs)
    rows = ["x,f,spline"]
    rows += [f"{x:.6f},{f:.10e},{s:.10e}" for x, f, s in zip(xs, truth, fitted, strict=True)]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(rows) + "\n")
    return path


def print_summary(report: EvalReport, console: Console) -> None:
    """Print the headline metrics as a table."""
    a = report.aggregates
    table = Table(title=f"📊 {report.preset} ({len(report.cases)} cases)")
    table.add_column("Metric")
    table.add_column("Spline", justify="right")
    table.add_column("Model", justify="right")
    table.add_row("Mean error", f"{a.spline_mean:.2%}", f"{a.mean:.2%}")
    table.add_row("Median error", f"{a.spline_median:.2%}", f"{a.median:.2%}")
    table.add_row("Std deviation", f"{a.spline_std:.2%}", f"{a.std:.2%}")
    table.add_row("Best case", "--", f"{a.best:.2%}")
    table.add_row("Success (<10%)", f"{a.spline_success_10:.1%}", f"{a.success_10:.1%}")
    table.add_row("Success (<15%)", f"{a.spline_success_15:.1%}", f"{a.success_15:.1%}")
    console.print(table)
    console.print(f"Improvement: {a.improvement:+.2%}, cases improved: {a.improved_fraction:.1%}")
    if report.failures:
        console.print(f"[yellow]⚠ Skipped {len(report.failures)} cases (generation failed)[/yellow]")

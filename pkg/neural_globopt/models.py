"""Data models for neural-globopt: configurations and serialisable records."""

from __future__ import annotations

from datetime import datetime
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    computed_field,
    field_serializer,
    field_validator,
    model_validator,
)

from neural_globopt.trainer.optim import OPTIMIZERS, AbstractOptimizer, Adam

StopReason = Literal["converged", "max_iters"]


class DifficultyPreset(BaseModel):
    """Settings of the random function generator."""

    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    n_samples: int = Field(default=40, ge=4)
    noise_multiplier: float = Field(default=3.0, ge=0.0)
    knot_spacing_range: tuple[float, float] = (0.03, 0.08)
    oscillation_strength: float = Field(default=4.0, ge=0.0)
    coeff_jitter: float = Field(default=0.1, ge=0.0)
    decoy_count: tuple[int, int] = (5, 7)
    decoy_margin: tuple[float, float] = (0.0, 0.08)

    @field_validator("knot_spacing_range")
    @classmethod
    def check_spacing(cls, v: tuple[float, float]) -> tuple[float, float]:
        lo, hi = v
        if not 0.0 < lo <= hi < 0.5:
            raise ValueError(f"knot spacing must satisfy 0 < h_lo <= h_hi < 0.5, got {v}")
        return v

    @field_validator("decoy_count")
    @classmethod
    def check_decoy_count(cls, v: tuple[int, int]) -> tuple[int, int]:
        lo, hi = v
        if not 0 <= lo <= hi:
            raise ValueError(f"decoy count must satisfy 0 <= lo <= hi, got {v}")
        return v

    @field_validator("decoy_margin")
    @classmethod
    def check_decoy_margin(cls, v: tuple[float, float]) -> tuple[float, float]:
        lo, hi = v
        if not 0.0 <= lo <= hi < 1.0:
            raise ValueError(f"decoy margin must satisfy 0 <= lo <= hi < 1, got {v}")
        return v

    def with_noise(self, noise_multiplier: float) -> DifficultyPreset:
        """Copy of this preset with a different noise multiplier."""
        return self.model_copy(update={"noise_multiplier": noise_multiplier})


PRESETS: dict[str, DifficultyPreset] = {
    "smooth": DifficultyPreset(
        name="smooth",
        noise_multiplier=0.0,
        knot_spacing_range=(0.1, 0.2),
        oscillation_strength=0.0,
        decoy_count=(0, 0),
    ),
    "easy": DifficultyPreset(
        name="easy",
        noise_multiplier=0.5,
        knot_spacing_range=(0.08, 0.15),
        oscillation_strength=0.5,
        decoy_count=(1, 2),
        decoy_margin=(0.3, 0.5),
    ),
    "medium": DifficultyPreset(
        name="medium",
        noise_multiplier=1.0,
        knot_spacing_range=(0.06, 0.12),
        oscillation_strength=1.0,
        decoy_count=(2, 3),
        decoy_margin=(0.2, 0.4),
    ),
    "hard": DifficultyPreset(
        name="hard",
        noise_multiplier=2.0,
        knot_spacing_range=(0.04, 0.1),
        oscillation_strength=2.0,
        decoy_count=(3, 5),
        decoy_margin=(0.08, 0.2),
    ),
    "nightmare": DifficultyPreset(
        name="nightmare",
        noise_multiplier=3.0,
        knot_spacing_range=(0.03, 0.08),
        oscillation_strength=4.0,
    ),
}


def _convert_preset(v: DifficultyPreset | str | dict[str, Any]) -> DifficultyPreset | dict[str, Any]:
    """Convert a preset name to the registered preset."""
    if isinstance(v, str):
        preset = PRESETS.get(v.lower())
        if preset is None:
            raise ValueError(f"Unknown preset '{v}'. Expected one of: {', '.join(PRESETS)}")
        return preset
    return v


PresetType = Annotated[DifficultyPreset, BeforeValidator(_convert_preset)]


def _convert_optimizer(v: type[AbstractOptimizer] | str) -> type[AbstractOptimizer]:
    """Convert an optimizer name to its class."""
    if isinstance(v, str):
        cls = OPTIMIZERS.get(v.lower())
        if cls is None:
            raise ValueError(f"Unknown optimizer '{v}'. Expected one of: {', '.join(OPTIMIZERS)}")
        return cls
    return v


OptimizerType = Annotated[type[AbstractOptimizer], BeforeValidator(_convert_optimizer)]


class ModelConfig(BaseModel):
    """Architecture and run-loop settings."""

    d_model: int = Field(default=128, gt=0)
    d_edv: int = Field(default=64, gt=0)
    iter_hidden: int = Field(default=256, gt=0)
    t_max: int = Field(default=40, gt=0)
    stop_tau: float = Field(default=1e-5, gt=0.0)
    n_samples: int = Field(default=40, ge=4)
    # Forces exactly this many steps and disables the variance stop test.
    fixed_steps: int | None = Field(default=None, gt=0)
    dtype: Literal["float32", "float64"] = "float32"

    @field_validator("d_model")
    @classmethod
    def check_halving_chain(cls, v: int) -> int:
        if v % 4 != 0:
            raise ValueError(f"d_model must be divisible by 4, got {v}")
        return v

    @property
    def np_dtype(self) -> np.dtype[Any]:
        return np.dtype(self.dtype)

    @property
    def max_steps(self) -> int:
        return self.fixed_steps if self.fixed_steps is not None else self.t_max


class LossConfig(BaseModel):
    """Trajectory loss weights."""

    alpha_traj: float = Field(default=0.5, ge=0.0)


class TrainConfig(BaseModel):
    """Training loop configuration."""

    epochs: int = Field(default=300_000, gt=0)
    batch_size: int = Field(default=16, gt=0)
    learning_rate: float = Field(default=2e-4, ge=0.0)
    preset: PresetType = Field(default_factory=lambda: PRESETS["nightmare"])
    seed: int = Field(default=0, ge=0)
    checkpoint_every: int = Field(default=1000, gt=0)
    log_every: int = Field(default=1, gt=0)
    optimizer: OptimizerType = Adam
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    grad_clip: float | None = Field(default=5.0, gt=0.0)
    threads: int = Field(default=1, gt=0)
    run_dir: Path = Path("runs/train")
    deterministic_log: bool = False

    @field_serializer("optimizer")
    def serialize_optimizer(self, v: type[AbstractOptimizer]) -> str:
        return v.name


class EvalConfig(BaseModel):
    """Held-out evaluation configuration."""

    preset: PresetType = Field(default_factory=lambda: PRESETS["nightmare"])
    n_cases: int = Field(default=50, gt=0)
    seed: int = Field(default=2024, ge=0)
    output_dir: Path = Path("runs/eval")
    threads: int = Field(default=1, gt=0)
    histogram_bin: float = Field(default=0.025, gt=0.0, le=1.0)
    write_cases: bool = True


class Config(BaseModel):
    """Main configuration."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def check_sample_count(self) -> Config:
        """The model input width follows the training preset."""
        if self.train.preset.n_samples != self.model.n_samples:
            raise ValueError(
                f"model.n_samples={self.model.n_samples} does not match "
                f"train.preset.n_samples={self.train.preset.n_samples}"
            )
        return self


class CaseRecord(BaseModel):
    """JSON case file: target function plus the noisy samples drawn from it."""

    knots: list[float]
    coeffs: list[float]
    argmin_true: float
    value_range: float
    xs: list[float]
    ys: list[float]
    sigma: float
    seed: int
    preset: str


class TrainLogRecord(BaseModel):
    """One row of the training log."""

    epoch: int
    loss: float
    mean_error: float = Field(ge=0.0, le=1.0)
    seconds: float

    def csv_row(self) -> str:
        return f"{self.epoch},{self.loss:.10e},{self.mean_error:.10e},{self.seconds:.3f}"


class CaseResult(BaseModel):
    """Outcome of one evaluation case."""

    seed: int
    x_star: float
    x0: float
    x_final: float
    spline_error: float = Field(ge=0.0, le=1.0)
    model_error: float = Field(ge=0.0, le=1.0)
    iterations: int
    stop_reason: StopReason
    value_gap: float
    trajectory: list[float] = Field(default_factory=list)


class CaseFailure(BaseModel):
    """A case whose generation failed and was skipped."""

    seed: int
    reason: str


class EvalAggregates(BaseModel):
    """Summary statistics over the evaluated cases."""

    mean: float
    median: float
    std: float
    best: float
    best_seed: int
    success_10: float
    success_15: float
    spline_mean: float
    spline_median: float
    spline_std: float
    spline_success_10: float
    spline_success_15: float
    improvement: float
    improved_fraction: float
    value_gap_mean: float

    @classmethod
    def compute(cls, cases: list[CaseResult]) -> EvalAggregates:
        if not cases:
            raise ValueError("Cannot aggregate an empty case list")
        model = np.array([c.model_error for c in cases], dtype=np.float64)
        spline = np.array([c.spline_error for c in cases], dtype=np.float64)
        gaps = np.array([c.value_gap for c in cases], dtype=np.float64)
        best = int(np.argmin(model))
        mean = float(np.mean(model))
        spline_mean = float(np.mean(spline))
        return cls(
            mean=mean,
            median=float(np.median(model)),
            std=float(np.std(model)),
            best=float(model[best]),
            best_seed=cases[best].seed,
            success_10=float(np.mean(model < 0.10)),
            success_15=float(np.mean(model < 0.15)),
            spline_mean=spline_mean,
            spline_median=float(np.median(spline)),
            spline_std=float(np.std(spline)),
            spline_success_10=float(np.mean(spline < 0.10)),
            spline_success_15=float(np.mean(spline < 0.15)),
            improvement=spline_mean - mean,
            improved_fraction=float(np.mean(model < spline)),
            value_gap_mean=float(np.mean(gaps)),
        )


class EvalReport(BaseModel):
    """Evaluation results with aggregates recomputable from the case list."""

    preset: str
    seed: int
    n_requested: int
    checkpoint: str | None = None
    cases: list[CaseResult]
    failures: list[CaseFailure] = Field(default_factory=list)
    aggregates: EvalAggregates

    @classmethod
    def from_cases(
        cls,
        cases: list[CaseResult],
        *,
        preset: str,
        seed: int,
        n_requested: int,
        checkpoint: str | None = None,
        failures: list[CaseFailure] | None = None,
    ) -> EvalReport:
        return cls(
            preset=preset,
            seed=seed,
            n_requested=n_requested,
            checkpoint=checkpoint,
            cases=cases,
            failures=failures or [],
            aggregates=EvalAggregates.compute(cases),
        )

    def verify(self) -> bool:
        """True when every aggregate equals its recomputation exactly."""
        return EvalAggregates.compute(self.cases) == self.aggregates


class SplineBaselineStats(BaseModel):
    """Distribution of the spline baseline error |x0 - x*| over fresh cases."""

    preset: str
    seed: int
    n_cases: int
    mean: float
    median: float
    std: float
    success_10: float
    success_15: float
    failures: int = 0

    @classmethod
    def compute(
        cls, errors: list[float], *, preset: str, seed: int, failures: int = 0
    ) -> SplineBaselineStats:
        if not errors:
            raise ValueError("Cannot summarise an empty error list")
        e = np.array(errors, dtype=np.float64)
        return cls(
            preset=preset,
            seed=seed,
            n_cases=len(errors),
            mean=float(np.mean(e)),
            median=float(np.median(e)),
            std=float(np.std(e)),
            success_10=float(np.mean(e < 0.10)),
            success_15=float(np.mean(e < 0.15)),
            failures=failures,
        )


class ParamCountReport(BaseModel):
    """Per-component parameter counts and the delta to the published figures."""

    main_encoder: int
    iterator: int
    updater: int
    total: int
    published: dict[str, int]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def delta(self) -> dict[str, int]:
        counts = {
            "main_encoder": self.main_encoder,
            "iterator": self.iterator,
            "updater": self.updater,
            "total": self.total,
        }
        return {k: counts[k] - v for k, v in self.published.items()}


class RunManifest(BaseModel):
    """Everything needed to reproduce a CLI run."""

    subcommand: str
    config: dict[str, Any]
    seeds: dict[str, int] = Field(default_factory=dict)
    version: str
    outputs: dict[str, str] = Field(default_factory=dict)
    threads: int = 1
    created_at: datetime = Field(default_factory=datetime.now)

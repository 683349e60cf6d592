"""Training loop over freshly generated problems."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from scipy.stats import spearmanr

from neural_globopt.autodiff.params import ParamStore
from neural_globopt.autodiff.value import Array
from neural_globopt.exceptions import GenerationFailedError, InvalidArgumentError, NumericError
from neural_globopt.funcgen import Case, make_case
from neural_globopt.model.network import build_params, run
from neural_globopt.model.trajectory import ModelInputs
from neural_globopt.models import LossConfig, ModelConfig, TrainConfig, TrainLogRecord
from neural_globopt.seeding import Namespace, case_seed
from neural_globopt.trainer.checkpoint import (
    checkpoint_dir,
    latest_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from neural_globopt.trainer.loss import trajectory_loss
from neural_globopt.trainer.optim import AbstractOptimizer, clip_by_global_norm

logger = logging.getLogger(__name__)

LOG_FILE = "training_log.csv"
LOG_HEADER = "epoch,loss,mean_error,seconds"
GENERATION_RETRIES = 3


@dataclass(frozen=True)
class MemberResult:
    """Loss, final error and gradients of one batch member."""

    seed: int
    loss: float
    error: float
    grads: dict[str, Array]


@dataclass
class TrainResult:
    """Final parameters, logged records and the last checkpoint written."""

    params: ParamStore
    records: list[TrainLogRecord] = field(default_factory=list)
    checkpoint: Path | None = None


def training_case(tcfg: TrainConfig, epoch: int, member: int) -> Case:
    """Deterministic training case for (epoch, member); retries on generation failure."""
    for retry in range(GENERATION_RETRIES + 1):
        seed = case_seed(tcfg.seed, Namespace.TRAIN, epoch, member, retry)
        try:
            return make_case(tcfg.preset, seed)
        except GenerationFailedError as e:
            logger.warning(f"Epoch {epoch} member {member}: {e}; retrying")
    raise GenerationFailedError(GENERATION_RETRIES + 1, tcfg.seed)


def member_pass(
    case: Case, params: ParamStore, mcfg: ModelConfig, lcfg: LossConfig, epoch: int
) -> MemberResult:
    """Forward and backward for one case over a private snapshot of ``params``."""
    snapshot = params.snapshot()
    traj = run(ModelInputs.from_case(case), snapshot, mcfg)
    loss = trajectory_loss(traj, case.x_star, lcfg)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(
            "Non-finite trajectory loss", stage="trajectory_loss", epoch=epoch, case_seed=case.seed
        )
    loss.backward()
    return MemberResult(
        seed=case.seed,
        loss=value,
        error=abs(traj.x_final - case.x_star),
        grads={name: v.grad for name, v in snapshot.items()},
    )


def reduce_gradients(members: list[MemberResult]) -> dict[str, Array]:
    """Batch-mean gradients, summed in member order."""
    total = {name: g.copy() for name, g in members[0].grads.items()}
    for member in members[1:]:
        for name, g in member.grads.items():
            total[name] += g
    return {name: g / len(members) for name, g in total.items()}


def smoothed_trend(losses: list[float], window: int = 50) -> tuple[Array, float]:
    """Moving average of ``losses`` and its Spearman correlation with the epoch index."""
    if window < 1 or len(losses) < window + 1:
        raise InvalidArgumentError(f"Need more than {window} losses for window {window}")
    smoothed = np.convolve(np.asarray(losses, dtype=np.float64), np.ones(window) / window, "valid")
    rho = spearmanr(np.arange(smoothed.size), smoothed).statistic
    return smoothed, float(rho)


class Trainer:
    """Runs the epochs, writes the training log and checkpoints."""

    def __init__(
        self,
        tcfg: TrainConfig,
        lcfg: LossConfig,
        mcfg: ModelConfig,
        console: Console | None = None,
    ) -> None:
        if tcfg.preset.n_samples != mcfg.n_samples:
            raise InvalidArgumentError(
                f"Preset draws {tcfg.preset.n_samples} samples but the model expects {mcfg.n_samples}"
            )
        self.tcfg = tcfg
        self.lcfg = lcfg
        self.mcfg = mcfg
        self.console = console or Console()
        self.run_dir = tcfg.run_dir
        self.log_path = self.run_dir / LOG_FILE
        self.params = build_params(mcfg, seed=tcfg.seed)
        self.optimizer: AbstractOptimizer = tcfg.optimizer.from_config(self.params, tcfg)
        self.start_epoch = 1

    def resume(self) -> bool:
        """Continue from the newest checkpoint in the run directory, if any."""
        path = latest_checkpoint(self.run_dir)
        if path is None:
            return False
        ckpt = load_checkpoint(path, expected=self.mcfg)
        self.params.load_state(ckpt.params)
        if ckpt.optimizer_state is not None and ckpt.optimizer == self.optimizer.name:
            self.optimizer.load_state_store(ckpt.optimizer_state, ckpt.optimizer_steps)
        self.start_epoch = ckpt.epoch + 1
        self._truncate_log(ckpt.epoch)
        logger.info(f"Resumed from {path} at epoch {self.start_epoch}")
        return True

    def _truncate_log(self, last_epoch: int) -> None:
        if not self.log_path.exists():
            return
        kept = [LOG_HEADER]
        for line in self.log_path.read_text().splitlines()[1:]:
            if line and int(line.split(",", 1)[0]) <= last_epoch:
                kept.append(line)
        self.log_path.write_text("\n".join(kept) + "\n")

    def _append_log(self, record: TrainLogRecord) -> None:
        if not self.log_path.exists():
            self.log_path.write_text(LOG_HEADER + "\n")
        with open(self.log_path, "a") as f:
            f.write(record.csv_row() + "\n")

    def step(self, epoch: int, pool: ThreadPoolExecutor | None = None) -> TrainLogRecord:
        """One optimizer step over a fresh batch."""
        started = time.perf_counter()
        cases = [training_case(self.tcfg, epoch, b) for b in range(self.tcfg.batch_size)]

        def work(case: Case) -> MemberResult:
            return member_pass(case, self.params, self.mcfg, self.lcfg, epoch)

        members = list(pool.map(work, cases)) if pool is not None else [work(c) for c in cases]
        grads, norm = clip_by_global_norm(reduce_gradients(members), self.tcfg.grad_clip)
        if not np.isfinite(norm):
            raise NumericError("Non-finite gradient norm", stage="optimizer", epoch=epoch)
        self.optimizer.step(grads)

        seconds = 0.0 if self.tcfg.deterministic_log else time.perf_counter() - started
        return TrainLogRecord(
            epoch=epoch,
            loss=float(np.mean([m.loss for m in members])),
            mean_error=float(np.mean([m.error for m in members])),
            seconds=seconds,
        )

    def checkpoint(self, epoch: int) -> Path:
        return save_checkpoint(
            checkpoint_dir(self.run_dir, epoch),
            self.params,
            self.mcfg,
            self.lcfg,
            optimizer=self.optimizer,
            epoch=epoch,
        )

    def run(self, show_progress: bool = True) -> TrainResult:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        if self.start_epoch == 1 and self.log_path.exists():
            self.log_path.unlink()
        result = TrainResult(params=self.params)
        last = self.tcfg.epochs
        pool = ThreadPoolExecutor(max_workers=self.tcfg.threads) if self.tcfg.threads > 1 else None

        try:
            with Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                BarColumn(),
                console=self.console,
                disable=not show_progress,
            ) as progress:
                task = progress.add_task("🏋 Training...", total=last, completed=self.start_epoch - 1)
                for epoch in range(self.start_epoch, last + 1):
                    record = self.step(epoch, pool)
                    if epoch % self.tcfg.log_every == 0 or epoch == last:
                        self._append_log(record)
                        result.records.append(record)
                        logger.info(
                            f"epoch={epoch} loss={record.loss:.5f} mean_error={record.mean_error:.4f}"
                        )
                    if epoch % self.tcfg.checkpoint_every == 0 or epoch == last:
                        result.checkpoint = self.checkpoint(epoch)
                    progress.update(
                        task,
                        advance=1,
                        description=f"🏋 Epoch {epoch}/{last} error={record.mean_error:.3f}",
                    )
        finally:
            if pool is not None:
                pool.shutdown()

        if result.checkpoint is None:
            result.checkpoint = latest_checkpoint(self.run_dir)
        return result


def train(
    tcfg: TrainConfig,
    lcfg: LossConfig,
    mcfg: ModelConfig,
    *,
    resume: bool = False,
    console: Console | None = None,
    show_progress: bool = True,
) -> TrainResult:
    """Train from scratch (or from the latest checkpoint with ``resume``)."""
    trainer = Trainer(tcfg, lcfg, mcfg, console=console)
    if resume:
        trainer.resume()
    return trainer.run(show_progress=show_progress)

"""Inputs, intermediate state and outputs of one model run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from neural_globopt.autodiff.value import Value
from neural_globopt.exceptions import InvalidArgumentError
from neural_globopt.models import StopReason
from neural_globopt.spline import FloatArray

if TYPE_CHECKING:
    from neural_globopt.funcgen import Case


@dataclass(frozen=True)
class ModelInputs:
    """Per-sample channels x, y, y', c and the starting position x0."""

    xs: FloatArray
    ys: FloatArray
    dys: FloatArray
    cs: FloatArray
    x0: float

    def __post_init__(self) -> None:
        arrays = [np.asarray(a, dtype=np.float64) for a in (self.xs, self.ys, self.dys, self.cs)]
        lengths = {a.shape for a in arrays}
        if len(lengths) != 1 or arrays[0].ndim != 1 or arrays[0].size == 0:
            raise InvalidArgumentError(
                f"Model channels must be 1-D arrays of one length, got shapes {sorted(lengths)}"
            )
        if not 0.0 <= self.x0 <= 1.0:
            raise InvalidArgumentError(f"x0 must lie in [0, 1], got {self.x0}")
        for name, arr in zip(("xs", "ys", "dys", "cs"), arrays, strict=True):
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return int(self.xs.size)

    @classmethod
    def from_case(cls, case: Case) -> ModelInputs:
        return cls(
            xs=case.samples.xs,
            ys=case.samples.ys,
            dys=case.dys,
            cs=case.cs,
            x0=case.x0,
        )

    def permuted(self, order: npt.ArrayLike) -> ModelInputs:
        """Same samples in a different order."""
        idx = np.asarray(order)
        return ModelInputs(self.xs[idx], self.ys[idx], self.dys[idx], self.cs[idx], self.x0)


@dataclass(frozen=True)
class Encoding:
    """Compact function encoding e and the step size fed back as delta_prev."""

    e: Value
    delta: Value
    n_samples: int

    def __post_init__(self) -> None:
        if self.delta.item() < 0.0:
            raise InvalidArgumentError(f"Encoding delta must be non-negative, got {self.delta.item()}")


@dataclass(frozen=True)
class StepRecord:
    """One Iterator step: x_{t+1} = clamp(x_t + s_t * d_t)."""

    t: int
    x_t: float
    s_t: float
    d_t: float
    x_next: float


@dataclass
class Trajectory:
    """Ordered Iterator steps plus the differentiable positions x_0..x_T."""

    steps: list[StepRecord]
    stop_reason: StopReason
    positions: list[Value] = field(default_factory=list, repr=False)

    @property
    def x_final(self) -> float:
        return self.steps[-1].x_next if self.steps else float("nan")

    @property
    def iterations(self) -> int:
        return len(self.steps)

    def xs(self) -> list[float]:
        """x_0, x_1, ..., x_T as floats."""
        if not self.steps:
            return []
        return [self.steps[0].x_t, *(s.x_next for s in self.steps)]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"t": s.t, "x_t": s.x_t, "s_t": s.s_t, "d_t": s.d_t}) + "\n"
            for s in self.steps
        )

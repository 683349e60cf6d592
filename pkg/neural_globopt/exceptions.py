"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GlobOptError(Exception):
    """Base class for all errors raised by neural_globopt."""


class InvalidArgumentError(GlobOptError, ValueError):
    """An argument violates a documented precondition."""


class TooFewSamplesError(InvalidArgumentError):
    """Not enough samples to fit a cubic spline."""


class DomainError(InvalidArgumentError):
    """A position lies outside the unit interval."""


class ShapeError(GlobOptError, ValueError):
    """Operands of an autodiff operation have incompatible shapes."""

    def __init__(self, op: str, message: str) -> None:
        super().__init__(f"{op}: {message}")
        self.op = op


class IllConditionedError(GlobOptError, ArithmeticError):
    """A banded interpolation system could not be solved reliably."""


class NumericError(GlobOptError, ArithmeticError):
    """A non-finite value appeared during a computation."""

    def __init__(
        self,
        message: str,
        *,
        stage: str | None = None,
        iteration: int | None = None,
        epoch: int | None = None,
        case_seed: int | None = None,
    ) -> None:
        parts = [message]
        if stage is not None:
            parts.append(f"stage={stage}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        if epoch is not None:
            parts.append(f"epoch={epoch}")
        if case_seed is not None:
            parts.append(f"case_seed={case_seed}")
        super().__init__(" ".join(parts))
        self.stage = stage
        self.iteration = iteration
        self.epoch = epoch
        self.case_seed = case_seed


class GenerationFailedError(GlobOptError, RuntimeError):
    """Rejection sampling of a target function ran out of attempts."""

    def __init__(self, attempts: int, seed: int) -> None:
        super().__init__(f"No acceptable function after {attempts} attempts (seed={seed})")
        self.attempts = attempts
        self.seed = seed


class CheckpointError(GlobOptError):
    """Base class for checkpoint loading failures."""


class VersionMismatchError(CheckpointError):
    """The checkpoint was written with an unsupported format version."""


class CorruptManifestError(CheckpointError):
    """The checkpoint header or payload is truncated or unreadable."""


class ShapeMismatchError(CheckpointError):
    """A stored tensor does not match the shape expected by the model."""

    def __init__(self, name: str, expected: tuple[int, ...], found: tuple[int, ...]) -> None:
        super().__init__(f"Tensor '{name}' has shape {found}, expected {expected}")
        self.name = name
        self.expected = expected
        self.found = found

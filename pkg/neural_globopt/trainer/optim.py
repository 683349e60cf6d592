"""First-order optimizers over a ParamStore."""

from __future__ import annotations

import logging
import math
import sys
from abc import ABC, abstractmethod
from collections.abc import Mapping
from typing import TYPE_CHECKING, ClassVar

if sys.version_info >= (3, 12):
    from typing import override
else:
    from typing_extensions import override

import numpy as np

from neural_globopt.autodiff.params import ParamStore
from neural_globopt.autodiff.value import Array
from neural_globopt.exceptions import CheckpointError, InvalidArgumentError

if TYPE_CHECKING:
    from neural_globopt.models import TrainConfig

logger = logging.getLogger(__name__)


def global_norm(grads: Mapping[str, Array]) -> float:
    """L2 norm over every gradient tensor."""
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_by_global_norm(
    grads: Mapping[str, Array], max_norm: float | None
) -> tuple[dict[str, Array], float]:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    logger.debug(f"Clipping gradient norm {norm:.4g} to {max_norm}")
    return {name: (g * scale).astype(g.dtype) for name, g in grads.items()}, norm


class AbstractOptimizer(ABC):
    """Optimizer updating a ParamStore from a gradient mapping."""

    name: ClassVar[str]

    def __init__(self, store: ParamStore, lr: float) -> None:
        if lr < 0.0:
            raise InvalidArgumentError(f"Invalid learning rate: {lr}")
        self.store = store
        self.lr = lr
        self.steps = 0

    @classmethod
    @abstractmethod
    def from_config(cls, store: ParamStore, config: TrainConfig) -> AbstractOptimizer: ...

    @abstractmethod
    def step(self, grads: Mapping[str, Array]) -> None:
        """Apply one update; ``grads`` maps every parameter name to its gradient."""
        ...

    @abstractmethod
    def state_store(self) -> ParamStore:
        """Optimizer buffers packed as a ParamStore for serialisation."""
        ...

    @abstractmethod
    def load_state_store(self, state: ParamStore, steps: int) -> None: ...

    def _buffers(self, prefixes: tuple[str, ...], buffers: tuple[dict[str, Array], ...]) -> ParamStore:
        state = ParamStore(self.store.dtype)
        for prefix, buffer in zip(prefixes, buffers, strict=True):
            for name, arr in buffer.items():
                state.register(f"{prefix}.{name}", arr)
        return state

    def _restore(self, state: ParamStore, prefix: str) -> dict[str, Array]:
        restored: dict[str, Array] = {}
        for name, value in self.store.items():
            key = f"{prefix}.{name}"
            if key not in state or state[key].shape != value.shape:
                raise CheckpointError(f"Optimizer state has no matching buffer for '{name}'")
            restored[name] = np.array(state[key].data, dtype=self.store.dtype)
        return restored


class Adam(AbstractOptimizer):
    """Adam with bias-corrected moment estimates."""

    name = "adam"

    def __init__(
        self,
        store: ParamStore,
        lr: float = 2e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        super().__init__(store, lr)
        if not 0.0 <= betas[0] < 1.0:
            raise InvalidArgumentError(f"Invalid beta parameter at index 0: {betas[0]}")
        if not 0.0 <= betas[1] < 1.0:
            raise InvalidArgumentError(f"Invalid beta parameter at index 1: {betas[1]}")
        if eps < 0.0:
            raise InvalidArgumentError(f"Invalid epsilon value: {eps}")
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = {name: np.zeros_like(v.data) for name, v in store.items()}
        self.v = {name: np.zeros_like(v.data) for name, v in store.items()}

    @classmethod
    @override
    def from_config(cls, store: ParamStore, config: TrainConfig) -> Adam:
        return cls(store, lr=config.learning_rate)

    @override
    def step(self, grads: Mapping[str, Array]) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for name, value in self.store.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            self.store.assign(name, value.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))

    @override
    def state_store(self) -> ParamStore:
        return self._buffers(("m", "v"), (self.m, self.v))

    @override
    def load_state_store(self, state: ParamStore, steps: int) -> None:
        self.m = self._restore(state, "m")
        self.v = self._restore(state, "v")
        self.steps = steps


class SGDMomentum(AbstractOptimizer):
    """Heavy-ball SGD."""

    name = "sgd_momentum"

    def __init__(self, store: ParamStore, lr: float = 2e-4, momentum: float = 0.9) -> None:
        super().__init__(store, lr)
        if not 0.0 <= momentum < 1.0:
            raise InvalidArgumentError(f"Invalid momentum: {momentum}")
        self.momentum = momentum
        self.buffer = {name: np.zeros_like(v.data) for name, v in store.items()}

    @classmethod
    @override
    def from_config(cls, store: ParamStore, config: TrainConfig) -> SGDMomentum:
        return cls(store, lr=config.learning_rate, momentum=config.momentum)

    @override
    def step(self, grads: Mapping[str, Array]) -> None:
        self.steps += 1
        for name, value in self.store.items():
            self.buffer[name] = self.momentum * self.buffer[name] + grads[name]
            self.store.assign(name, value.data - self.lr * self.buffer[name])

    @override
    def state_store(self) -> ParamStore:
        return self._buffers(("buffer",), (self.buffer,))

    @override
    def load_state_store(self, state: ParamStore, steps: int) -> None:
        self.buffer = self._restore(state, "buffer")
        self.steps = steps


OPTIMIZERS: dict[str, type[AbstractOptimizer]] = {
    Adam.name: Adam,
    SGDMomentum.name: SGDMomentum,
}

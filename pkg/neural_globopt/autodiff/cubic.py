"""Learnable bounded cubic activation."""

from __future__ import annotations

import math
from dataclasses import dataclass

from neural_globopt.autodiff.params import ParamStore
from neural_globopt.autodiff.value import Value, clamp_max, exp, mul, relu, square

ALPHA_INIT = 0.1
BETA_INIT = 0.01
GAMMA_INIT = 0.001
INPUT_CLAMP = 10.0


@dataclass(frozen=True)
class StableCubicParams:
    """Log-parameterised coefficients of one activation instance."""

    log_alpha: Value
    log_beta: Value
    log_gamma: Value

    @classmethod
    def register(cls, store: ParamStore, prefix: str) -> StableCubicParams:
        return cls(
            log_alpha=store.register(f"{prefix}.log_alpha", math.log(ALPHA_INIT)),
            log_beta=store.register(f"{prefix}.log_beta", math.log(BETA_INIT)),
            log_gamma=store.register(f"{prefix}.log_gamma", math.log(GAMMA_INIT)),
        )

    @classmethod
    def from_store(cls, store: ParamStore, prefix: str) -> StableCubicParams:
        return cls(
            log_alpha=store[f"{prefix}.log_alpha"],
            log_beta=store[f"{prefix}.log_beta"],
            log_gamma=store[f"{prefix}.log_gamma"],
        )

    def coefficients(self) -> tuple[float, float, float]:
        return (
            math.exp(self.log_alpha.item()),
            math.exp(self.log_beta.item()),
            math.exp(self.log_gamma.item()),
        )

    def upper_bound(self) -> float:
        """Largest value the activation can emit."""
        alpha, beta, gamma = self.coefficients()
        c = INPUT_CLAMP
        return alpha * c + beta * c**2 + gamma * c**3


def stable_cubic(z: Value, p: StableCubicParams) -> Value:
    """alpha*r + beta*r^2 + gamma*r^3 with r = relu(min(z, 10))."""
    r = relu(clamp_max(z, INPUT_CLAMP))
    r2 = square(r)
    r3 = mul(r2, r)
    return exp(p.log_alpha) * r + exp(p.log_beta) * r2 + exp(p.log_gamma) * r3

"""Parameterised building blocks: dense layers, the 1-D U-Net and multi-scale pooling.

Each block knows the parameter names it owns under its prefix. ``register``
creates the tensors in a ParamStore; calling the block runs the forward pass
against any store holding those names (the original or a snapshot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from neural_globopt.autodiff.cubic import ALPHA_INIT, StableCubicParams, stable_cubic
from neural_globopt.autodiff.params import ParamStore
from neural_globopt.autodiff.value import Value, concat, linear, mean_over_samples

# Fan-in bound multiplier of activated layers fed by hidden features. In the
# activation's linear regime a layer keeps 0.5 * (alpha * gain)^2 / 3 = 2/3 of
# the second moment of its input.
ACTIVATED_GAIN = 2.0 / ALPHA_INIT


@dataclass(frozen=True)
class Dense:
    """Affine map x @ W + b, optionally followed by a StableCubic activation.

    ``raw_input`` marks layers fed by unscaled sample channels; they keep the
    plain 1/sqrt(fan_in) bound.
    """

    prefix: str
    fan_in: int
    fan_out: int
    activated: bool = True
    raw_input: bool = False

    @property
    def init_bound(self) -> float:
        gain = ACTIVATED_GAIN if self.activated and not self.raw_input else 1.0
        return gain / math.sqrt(self.fan_in)

    def register(self, store: ParamStore, rng: np.random.Generator) -> None:
        bound = self.init_bound
        store.register(
            f"{self.prefix}.weight", rng.uniform(-bound, bound, (self.fan_in, self.fan_out))
        )
        store.register(f"{self.prefix}.bias", np.zeros(self.fan_out))
        if self.activated:
            StableCubicParams.register(store, f"{self.prefix}.act")

    def __call__(self, params: ParamStore, x: Value) -> Value:
        z = linear(params[f"{self.prefix}.weight"], params[f"{self.prefix}.bias"], x)
        if not self.activated:
            return z
        return stable_cubic(z, StableCubicParams.from_store(params, f"{self.prefix}.act"))


@dataclass(frozen=True)
class UNet:
    """Per-sample encoder/decoder 4d -> 2d -> d -> d/2 -> d/4 with skip concatenations.

    The decoder widens back to 4d through concatenation with the matching
    encoder outputs, and a final layer maps 4d -> d.
    """

    prefix: str
    d_model: int

    @property
    def stages(self) -> tuple[Dense, ...]:
        d = self.d_model
        p = self.prefix
        return (
            Dense(f"{p}.enc1", 4 * d, 2 * d),
            Dense(f"{p}.enc2", 2 * d, d),
            Dense(f"{p}.enc3", d, d // 2),
            Dense(f"{p}.bottleneck", d // 2, d // 4),
            Dense(f"{p}.dec1", d // 4, d // 2),
            Dense(f"{p}.dec2", d, d),
            Dense(f"{p}.dec3", 2 * d, 2 * d),
            Dense(f"{p}.final", 4 * d, d),
        )

    def register(self, store: ParamStore, rng: np.random.Generator) -> None:
        for stage in self.stages:
            stage.register(store, rng)

    def __call__(self, params: ParamStore, h: Value) -> Value:
        enc1, enc2, enc3, bottleneck, dec1, dec2, dec3, final = self.stages
        e1 = enc1(params, h)
        e2 = enc2(params, e1)
        e3 = enc3(params, e2)
        b = bottleneck(params, e3)
        u1 = concat([dec1(params, b), e3])
        u2 = concat([dec2(params, u1), e2])
        u3 = concat([dec3(params, u2), e1])
        return final(params, u3)


@dataclass(frozen=True)
class MultiScalePool:
    """Global, focus and local summaries of an (n, d) feature matrix.

    All three scales pool with the mean over samples and differ only in
    their learned projections.
    """

    prefix: str
    d_model: int

    @property
    def scales(self) -> tuple[Dense, ...]:
        d = self.d_model
        return tuple(Dense(f"{self.prefix}.{name}", d, d) for name in ("global", "focus", "local"))

    def register(self, store: ParamStore, rng: np.random.Generator) -> None:
        for scale in self.scales:
            scale.register(store, rng)

    def __call__(self, params: ParamStore, features: Value) -> Value:
        pooled = mean_over_samples(features)
        return concat([scale(params, pooled) for scale in self.scales])

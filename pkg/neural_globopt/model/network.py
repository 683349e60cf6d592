"""MainEncoder, Iterator and Updater, and the iterate-until-converged run loop."""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from neural_globopt.autodiff.params import ParamStore
from neural_globopt.autodiff.value import (
    Value,
    clamp,
    concat,
    constant,
    softplus,
    take,
    tanh,
    tile_rows,
    variance3,
)
from neural_globopt.exceptions import NumericError
from neural_globopt.model.layers import Dense, MultiScalePool, UNet
from neural_globopt.model.trajectory import Encoding, ModelInputs, StepRecord, Trajectory
from neural_globopt.models import ModelConfig, ParamCountReport, StopReason
from neural_globopt.seeding import make_rng

logger = logging.getLogger(__name__)

MODALITIES = ("x", "y", "dy", "c")
COMPONENTS = ("main_encoder", "iterator", "updater")

PUBLISHED_PARAM_COUNTS = {
    "main_encoder": 687_232,
    "iterator": 84_225,
    "updater": 519_389,
    "total": 1_290_846,
}


class Architecture:
    """Every parameterised block of the model for one configuration."""

    def __init__(self, cfg: ModelConfig) -> None:
        d, e, h = cfg.d_model, cfg.d_edv, cfg.iter_hidden
        self.cfg = cfg

        self.encoders = {m: Dense(f"main_encoder.{m}_encoder", 1, d, raw_input=True) for m in MODALITIES}
        self.encoder_unet = UNet("main_encoder.unet", d)
        self.encoder_pool = MultiScalePool("main_encoder.pool", d)
        self.edv = Dense("main_encoder.edv", 3 * d, e, activated=False)
        self.delta_head = Dense("main_encoder.delta_head", 3 * d, 1, activated=False)

        self.hidden = Dense("iterator.hidden", e + 2, h)
        self.direction_head = Dense("iterator.direction_head", h, 1, activated=False)
        self.step_head = Dense("iterator.step_head", h, 1, activated=False)

        self.expand = Dense("updater.expand", e, 4 * d)
        self.decompressor = UNet("updater.decompressor", d)
        self.modifiers = {m: Dense(f"updater.modifier_{m}", d + 2, d) for m in MODALITIES}
        self.reencoder = UNet("updater.reencoder", d)
        self.reencoder_pool = MultiScalePool("updater.pool", d)
        self.edv_prime = Dense("updater.edv", 3 * d, e, activated=False)

    def blocks(self) -> list[Dense | UNet | MultiScalePool]:
        """Blocks in registration order."""
        return [
            *self.encoders.values(),
            self.encoder_unet,
            self.encoder_pool,
            self.edv,
            self.delta_head,
            self.hidden,
            self.direction_head,
            self.step_head,
            self.expand,
            self.decompressor,
            *self.modifiers.values(),
            self.reencoder,
            self.reencoder_pool,
            self.edv_prime,
        ]


def _dense_shapes(prefix: str, fan_in: int, fan_out: int, activated: bool = True) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        f"{prefix}.weight": (fan_in, fan_out),
        f"{prefix}.bias": (fan_out,),
    }
    if activated:
        for coeff in ("log_alpha", "log_beta", "log_gamma"):
            shapes[f"{prefix}.act.{coeff}"] = ()
    return shapes


def _unet_shapes(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    chain = [
        ("enc1", 4 * d, 2 * d),
        ("enc2", 2 * d, d),
        ("enc3", d, d // 2),
        ("bottleneck", d // 2, d // 4),
        ("dec1", d // 4, d // 2),
        ("dec2", d // 2 + d // 2, d),
        ("dec3", d + d, 2 * d),
        ("final", 2 * d + 2 * d, d),
    ]
    shapes: dict[str, tuple[int, ...]] = {}
    for name, fan_in, fan_out in chain:
        shapes |= _dense_shapes(f"{prefix}.{name}", fan_in, fan_out)
    return shapes


def _pool_shapes(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for scale in ("global", "focus", "local"):
        shapes |= _dense_shapes(f"{prefix}.{scale}", d, d)
    return shapes


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Weight shapes implied by the dimension chain, in registration order."""
    d, e, h = cfg.d_model, cfg.d_edv, cfg.iter_hidden
    shapes: dict[str, tuple[int, ...]] = {}
    for m in MODALITIES:
        shapes |= _dense_shapes(f"main_encoder.{m}_encoder", 1, d)
    shapes |= _unet_shapes("main_encoder.unet", d)
    shapes |= _pool_shapes("main_encoder.pool", d)
    shapes |= _dense_shapes("main_encoder.edv", 3 * d, e, activated=False)
    shapes |= _dense_shapes("main_encoder.delta_head", 3 * d, 1, activated=False)
    shapes |= _dense_shapes("iterator.hidden", e + 2, h)
    shapes |= _dense_shapes("iterator.direction_head", h, 1, activated=False)
    shapes |= _dense_shapes("iterator.step_head", h, 1, activated=False)
    shapes |= _dense_shapes("updater.expand", e, 4 * d)
    shapes |= _unet_shapes("updater.decompressor", d)
    for m in MODALITIES:
        shapes |= _dense_shapes(f"updater.modifier_{m}", d + 2, d)
    shapes |= _unet_shapes("updater.reencoder", d)
    shapes |= _pool_shapes("updater.pool", d)
    shapes |= _dense_shapes("updater.edv", 3 * d, e, activated=False)
    return shapes


def build_params(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    """Fan-in uniform weights, zero biases, StableCubic coefficients at their defaults.

    Activated layers fed by hidden features widen the bound by ``ACTIVATED_GAIN``.
    """
    store = ParamStore(cfg.np_dtype)
    rng = make_rng(seed)
    for block in Architecture(cfg).blocks():
        block.register(store, rng)

    expected = expected_shapes(cfg)
    actual = store.shapes()
    if list(actual.items()) != list(expected.items()):
        mismatched = [n for n in expected if actual.get(n) != expected[n]]
        raise AssertionError(f"Parameter shapes deviate from the dimension chain: {mismatched[:5]}")
    logger.debug(f"Built {len(store)} tensors with {store.total_count} parameters")
    return store


def _check_finite(v: Value, stage: str, iteration: int | None = None) -> Value:
    if not np.all(np.isfinite(v.data)):
        raise NumericError("Non-finite activation", stage=stage, iteration=iteration)
    return v


def _architecture(params: ParamStore) -> Architecture:
    d = params["main_encoder.x_encoder.weight"].shape[1]
    e = params["main_encoder.edv.weight"].shape[1]
    h = params["iterator.hidden.weight"].shape[1]
    return Architecture(ModelConfig(d_model=d, d_edv=e, iter_hidden=h))


def encode(inputs: ModelInputs, params: ParamStore, arch: Architecture | None = None) -> Encoding:
    """MainEncoder: per-modality projections, U-Net fusion, pooling, e and delta_0."""
    arch = arch or _architecture(params)
    dtype = params.dtype
    channels = dict(zip(MODALITIES, (inputs.xs, inputs.ys, inputs.dys, inputs.cs), strict=True))
    projected = [
        arch.encoders[m](params, constant(channels[m][:, None], dtype)) for m in MODALITIES
    ]
    fused = _check_finite(arch.encoder_unet(params, concat(projected)), "main_encoder.unet")
    pooled = arch.encoder_pool(params, fused)
    e = _check_finite(arch.edv(params, pooled), "main_encoder.edv")
    delta = _check_finite(take(softplus(arch.delta_head(params, pooled)), 0), "main_encoder.delta")
    return Encoding(e=e, delta=delta, n_samples=inputs.n)


class StepOutput(NamedTuple):
    """One Iterator step: new position, step size and direction."""

    x_next: Value
    s: Value
    d: Value


def iterate_step(
    enc: Encoding,
    x_t: Value,
    params: ParamStore,
    arch: Architecture | None = None,
    iteration: int | None = None,
) -> StepOutput:
    """Iterator: direction d in [-1, 1], step s > 0, x_next = clamp(x_t + s * d, 0, 1)."""
    arch = arch or _architecture(params)
    v = concat([enc.e, x_t, enc.delta])
    hidden = _check_finite(arch.hidden(params, v), "iterator", iteration)
    d = take(tanh(arch.direction_head(params, hidden)), 0)
    s = take(softplus(arch.step_head(params, hidden)), 0)
    x_next = clamp(x_t + s * d, 0.0, 1.0)
    _check_finite(x_next, "iterator", iteration)
    return StepOutput(x_next=x_next, s=s, d=d)


def update_encoding(
    enc: Encoding,
    x_next: Value,
    s_t: Value,
    params: ParamStore,
    arch: Architecture | None = None,
    iteration: int | None = None,
) -> Encoding:
    """Updater: decompress e, condition on (x_next, s_t), re-encode to e_{t+1}."""
    arch = arch or _architecture(params)
    n = enc.n_samples
    expanded = tile_rows(arch.expand(params, enc.e), n)
    reconstruction = _check_finite(
        arch.decompressor(params, expanded), "updater.decompressor", iteration
    )
    conditioned = concat([reconstruction, tile_rows(x_next, n), tile_rows(s_t, n)])
    modified = concat([arch.modifiers[m](params, conditioned) for m in MODALITIES])
    fused = _check_finite(arch.reencoder(params, modified), "updater.reencoder", iteration)
    e_next = _check_finite(
        arch.edv_prime(params, arch.reencoder_pool(params, fused)), "updater.edv", iteration
    )
    return Encoding(e=e_next, delta=s_t, n_samples=n)


def run(inputs: ModelInputs, params: ParamStore, cfg: ModelConfig) -> Trajectory:
    """Encode once, then alternate Iterator and Updater until the step sizes settle.

    After step t >= 2 the run stops when the population variance of the last
    three step sizes is below ``cfg.stop_tau``; the Updater is skipped for the
    final step since its output would be unused.
    """
    arch = Architecture(cfg)
    enc = encode(inputs, params, arch)
    x = constant(inputs.x0, params.dtype)
    positions = [x]
    steps: list[StepRecord] = []
    step_sizes: list[Value] = []
    stop_reason: StopReason = "max_iters"
    limit = cfg.max_steps

    for t in range(limit):
        x_next, s, d = iterate_step(enc, x, params, arch, iteration=t)
        steps.append(StepRecord(t=t, x_t=x.item(), s_t=s.item(), d_t=d.item(), x_next=x_next.item()))
        positions.append(x_next)
        step_sizes.append(s)

        if cfg.fixed_steps is None and t >= 2:
            if variance3(*step_sizes[-3:]).item() < cfg.stop_tau:
                stop_reason = "converged"
                break
        if t + 1 < limit:
            enc = update_encoding(enc, x_next, s, params, arch, iteration=t)
        x = x_next

    return Trajectory(steps=steps, stop_reason=stop_reason, positions=positions)


def param_count(params: ParamStore) -> ParamCountReport:
    """Exact per-component parameter counts."""
    counts = {name: params.count(f"{name}.") for name in COMPONENTS}
    report = ParamCountReport(
        main_encoder=counts["main_encoder"],
        iterator=counts["iterator"],
        updater=counts["updater"],
        total=params.total_count,
        published=PUBLISHED_PARAM_COUNTS,
    )
    logger.info(
        f"Parameters: main_encoder={report.main_encoder} iterator={report.iterator} "
        f"updater={report.updater} total={report.total}"
    )
    return report

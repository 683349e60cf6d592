"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from neural_globopt.autodiff import value as ops
from neural_globopt.autodiff.cubic import StableCubicParams, stable_cubic
from neural_globopt.autodiff.params import ParamStore
from neural_globopt.autodiff.value import Array, Value, constant
from neural_globopt.exceptions import InvalidArgumentError, NumericError
from neural_globopt.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

PRIMITIVE_THRESHOLD = 1e-6
MODEL_THRESHOLD = 1e-4

ScalarFn = Callable[[ParamStore], Value]


def _forward(f: ScalarFn, store: ParamStore) -> float:
    out = f(store)
    result = out.item()
    if not np.isfinite(result):
        raise NumericError("Non-finite value in gradient check forward pass", stage="grad_check")
    return result


def _coordinates(
    size: int, max_coords: int | None, rng: np.random.Generator
) -> npt.NDArray[np.intp]:
    if max_coords is None or size <= max_coords:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_coords, replace=False))


def grad_check(
    f: ScalarFn,
    store: ParamStore,
    eps: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``f`` must rebuild its graph from ``store`` on every call. With
    ``max_coords`` set, a deterministic sample of at most that many
    coordinates is checked per tensor.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise InvalidArgumentError(f"eps must lie in [1e-7, 1e-4], got {eps}")
    if store.dtype != np.float64:
        raise InvalidArgumentError("Gradient checks run on float64 parameter stores")

    store.zero_grad()
    out = f(store)
    if not np.isfinite(out.item()):
        raise NumericError("Non-finite value in gradient check forward pass", stage="grad_check")
    out.backward()
    analytic = store.grads()

    rng = make_rng(seed)
    worst = 0.0
    for name in list(store):
        base = np.array(store[name].data)
        flat_grad = analytic[name].ravel()
        for idx in _coordinates(base.size, max_coords, rng):
            bumped = base.copy().ravel()
            bumped[idx] += eps
            store.assign(name, bumped.reshape(base.shape))
            f_plus = _forward(f, store)
            bumped[idx] -= 2.0 * eps
            store.assign(name, bumped.reshape(base.shape))
            f_minus = _forward(f, store)
            store.assign(name, base)

            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(flat_grad[idx])
            rel = abs(a - numeric) / max(1.0, abs(a))
            if rel > worst:
                worst = rel
                logger.debug(f"{name}[{idx}]: analytic={a:.6e} numeric={numeric:.6e}")
    return worst


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of one verification suite."""

    name: str
    max_rel_error: float
    threshold: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.threshold


def _away_from(x: Array, kinks: tuple[float, ...], margin: float = 0.05) -> Array:
    for k in kinks:
        near = np.abs(x - k) < margin
        x = np.where(near, x + np.where(x >= k, 2.0, -2.0) * margin, x)
    return x


SuiteBuilder = Callable[[np.random.Generator], tuple[ParamStore, ScalarFn]]


def _unary(
    op: Callable[[Value], Value], scale: float = 1.0, shift: float = 0.0, kinks: tuple[float, ...] = ()
) -> SuiteBuilder:
    def build(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
        store = ParamStore(np.float64)
        x = _away_from(shift + scale * rng.standard_normal((4, 5)), kinks)
        store.register("x", x)
        weights = constant(rng.standard_normal((4, 5)))
        return store, lambda s: ops.total(ops.mul(op(s["x"]), weights))

    return build


def _binary(op: Callable[[Value, Value], Value]) -> SuiteBuilder:
    def build(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
        store = ParamStore(np.float64)
        store.register("a", rng.standard_normal((3, 4)))
        store.register("b", rng.standard_normal((3, 4)))
        store.register("k", rng.standard_normal())
        weights = constant(rng.standard_normal((3, 4)))

        def f(s: ParamStore) -> Value:
            same = op(s["a"], s["b"])
            scalar = op(s["k"], s["b"])
            return ops.total(ops.mul(ops.add(same, scalar), weights))

        return store, f

    return build


def _linear(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
    store = ParamStore(np.float64)
    store.register("w", rng.standard_normal((3, 4)))
    store.register("b", rng.standard_normal(4))
    store.register("x", rng.standard_normal((5, 3)))
    store.register("v", rng.standard_normal(3))
    weights = constant(rng.standard_normal((5, 4)))
    vweights = constant(rng.standard_normal(4))

    def f(s: ParamStore) -> Value:
        batch = ops.total(ops.mul(ops.linear(s["w"], s["b"], s["x"]), weights))
        single = ops.total(ops.mul(ops.linear(s["w"], s["b"], s["v"]), vweights))
        return batch + single

    return store, f


def _concat(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
    store = ParamStore(np.float64)
    store.register("a", rng.standard_normal((5, 2)))
    store.register("b", rng.standard_normal((5, 3)))
    store.register("v", rng.standard_normal(4))
    store.register("k", rng.standard_normal())
    weights = constant(rng.standard_normal((5, 5)))
    vweights = constant(rng.standard_normal(5))

    def f(s: ParamStore) -> Value:
        rows = ops.total(ops.mul(ops.concat([s["a"], s["b"]]), weights))
        flat = ops.total(ops.mul(ops.concat([s["v"], s["k"]]), vweights))
        return rows + ops.square(flat)

    return store, f


def _mean_over_samples(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
    store = ParamStore(np.float64)
    store.register("m", rng.standard_normal((40, 3)))
    weights = constant(rng.standard_normal(3))
    return store, lambda s: ops.total(ops.mul(ops.mean_over_samples(s["m"]), weights))


def _tile_rows(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
    store = ParamStore(np.float64)
    store.register("v", rng.standard_normal(3))
    store.register("k", rng.standard_normal())
    weights = constant(rng.standard_normal((4, 3)))
    kweights = constant(rng.standard_normal((4, 1)))

    def f(s: ParamStore) -> Value:
        tiled = ops.total(ops.mul(ops.tile_rows(s["v"], 4), weights))
        return tiled + ops.total(ops.mul(ops.tile_rows(s["k"], 4), kweights))

    return store, f


def _take(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
    store = ParamStore(np.float64)
    store.register("v", rng.standard_normal(5))
    return store, lambda s: ops.square(ops.take(s["v"], 2)) + ops.take(s["v"], 4)


def _variance3(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
    store = ParamStore(np.float64)
    for name in ("a", "b", "c"):
        store.register(name, rng.standard_normal())
    return store, lambda s: ops.variance3(s["a"], s["b"], s["c"])


def _stable_cubic_linear(rng: np.random.Generator) -> tuple[ParamStore, ScalarFn]:
    store = ParamStore(np.float64)
    store.register("z", _away_from(5.0 + 4.0 * rng.standard_normal((5, 4)), (0.0, 10.0)))
    StableCubicParams.register(store, "act")
    store.register("w", rng.standard_normal((4, 3)))
    store.register("b", rng.standard_normal(3))
    weights = constant(rng.standard_normal((5, 3)))

    def f(s: ParamStore) -> Value:
        hidden = stable_cubic(s["z"], StableCubicParams.from_store(s, "act"))
        return ops.total(ops.mul(ops.linear(s["w"], s["b"], hidden), weights))

    return store, f


PRIMITIVE_SUITES: dict[str, SuiteBuilder] = {
    "linear": _linear,
    "concat": _concat,
    "mean_over_samples": _mean_over_samples,
    "relu": _unary(ops.relu, kinks=(0.0,)),
    "tanh": _unary(ops.tanh),
    "softplus": _unary(ops.softplus, scale=3.0),
    "clamp_max": _unary(lambda v: ops.clamp_max(v, 10.0), scale=3.0, shift=10.0, kinks=(10.0,)),
    "clamp": _unary(lambda v: ops.clamp(v, 0.0, 1.0), scale=0.6, shift=0.5, kinks=(0.0, 1.0)),
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "neg": _unary(ops.neg),
    "square": _unary(ops.square),
    "exp": _unary(ops.exp),
    "abs": _unary(ops.absolute, kinks=(0.0,)),
    "tile_rows": _tile_rows,
    "take": _take,
    "sum": _unary(lambda v: ops.square(ops.total(v))),
    "variance3": _variance3,
    "stable_cubic+linear": _stable_cubic_linear,
}


def check_suite(name: str, trials: int = 100, seed: int = 0) -> GradCheckResult:
    """Run one primitive suite over ``trials`` random draws."""
    builder = PRIMITIVE_SUITES[name]
    worst = 0.0
    for trial in range(trials):
        rng = make_rng(derive_seed(seed, trial))
        store, f = builder(rng)
        worst = max(worst, grad_check(f, store))
    return GradCheckResult(name, worst, PRIMITIVE_THRESHOLD, trials)


def check_model(seed: int = 0, max_coords: int = 10) -> GradCheckResult:
    """Trajectory loss through a two-step unroll of a toy model."""
    from neural_globopt.model.network import build_params, run
    from neural_globopt.model.trajectory import ModelInputs
    from neural_globopt.models import LossConfig, ModelConfig
    from neural_globopt.trainer.loss import trajectory_loss

    cfg = ModelConfig(
        d_model=8, d_edv=8, iter_hidden=16, n_samples=5, fixed_steps=2, dtype="float64"
    )
    store = build_params(cfg, seed=seed)
    rng = make_rng(derive_seed(seed, 1))
    inputs = ModelInputs(
        xs=np.sort(rng.uniform(0.0, 1.0, 5)),
        ys=rng.standard_normal(5),
        dys=rng.standard_normal(5),
        cs=rng.standard_normal(5),
        x0=0.5,
    )
    x_star = 0.3
    loss_cfg = LossConfig()

    def f(s: ParamStore) -> Value:
        return trajectory_loss(run(inputs, s, cfg), x_star, loss_cfg)

    error = grad_check(f, store, max_coords=max_coords, seed=seed)
    return GradCheckResult("model_trajectory_loss", error, MODEL_THRESHOLD, 1)


def run_gradcheck_suites(
    trials: int = 100, seed: int = 0, include_model: bool = True
) -> list[GradCheckResult]:
    """Every primitive suite plus the full-model check."""
    results = [check_suite(name, trials=trials, seed=seed) for name in PRIMITIVE_SUITES]
    if include_model:
        results.append(check_model(seed=seed))
    for r in results:
        logger.info(f"gradcheck {r.name}: max rel err {r.max_rel_error:.3e} (<= {r.threshold:.0e})")
    return results

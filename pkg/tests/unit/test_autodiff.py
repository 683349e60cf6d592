"""Unit tests for neural_globopt.autodiff modules."""

from __future__ import annotations

import math
import struct

import numpy as np
import pytest

from neural_globopt.autodiff import value as ops
from neural_globopt.autodiff.cubic import StableCubicParams, stable_cubic
from neural_globopt.autodiff.gradcheck import (
    MODEL_THRESHOLD,
    PRIMITIVE_SUITES,
    PRIMITIVE_THRESHOLD,
    check_model,
    check_suite,
    grad_check,
)
from neural_globopt.autodiff.params import FORMAT_MAGIC, ParamStore
from neural_globopt.autodiff.value import Value, constant
from neural_globopt.exceptions import (
    CheckpointError,
    CorruptManifestError,
    InvalidArgumentError,
    ShapeError,
    ShapeMismatchError,
    VersionMismatchError,
)


class TestValue:
    """Tests for graph construction and backward."""

    def test_product_rule(self) -> None:
        """Test d(a*b)/da = b and d(a*b)/db = a."""
        a = Value(np.array([1.0, 2.0]))
        b = Value(np.array([3.0, -1.0]))
        ops.total(a * b).backward()
        assert a.grad.tolist() == [3.0, -1.0]
        assert b.grad.tolist() == [1.0, 2.0]

    def test_reused_node_accumulates(self) -> None:
        """Test a node used twice receives both contributions."""
        a = Value(np.array(3.0))
        (a * a + a).backward()
        assert a.grad.item() == 7.0

    def test_scalar_broadcast_reduces_gradient(self) -> None:
        """Test a 0-d operand collects the summed gradient."""
        k = Value(np.array(2.0))
        v = Value(np.array([1.0, 2.0, 3.0]))
        ops.total(ops.mul(k, v)).backward()
        assert k.grad.item() == 6.0
        assert v.grad.tolist() == [2.0, 2.0, 2.0]

    def test_incompatible_shapes(self) -> None:
        """Test binary operations reject mismatched non-scalar shapes."""
        with pytest.raises(ShapeError, match="add"):
            ops.add(constant([1.0, 2.0]), constant([1.0, 2.0, 3.0]))

    def test_backward_needs_scalar(self) -> None:
        """Test backward from a vector output raises ShapeError."""
        with pytest.raises(ShapeError):
            constant([1.0, 2.0]).backward()

    def test_graph_freed_after_backward(self) -> None:
        """Test backward drops references to parents by default."""
        a = Value(np.array(1.5))
        out = ops.square(a)
        out.backward()
        assert out._parents == ()

    def test_linear_shapes(self) -> None:
        """Test linear maps (n, in) to (n, out) and rejects a wrong width."""
        w = constant(np.ones((3, 2)))
        b = constant(np.zeros(2))
        assert ops.linear(w, b, constant(np.ones((4, 3)))).shape == (4, 2)
        with pytest.raises(ShapeError, match="linear"):
            ops.linear(w, b, constant(np.ones(4)))

    def test_concat_mixes_scalars_and_vectors(self) -> None:
        """Test 0-d parts join a 1-D concatenation as length-one vectors."""
        out = ops.concat([constant([1.0, 2.0]), constant(3.0), constant(4.0)])
        assert out.data.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_concat_rejects_row_mismatch(self) -> None:
        """Test 2-D parts must share a row count."""
        with pytest.raises(ShapeError, match="concat"):
            ops.concat([constant(np.ones((2, 3))), constant(np.ones((3, 3)))])

    def test_softplus_large_inputs(self) -> None:
        """Test softplus neither overflows nor loses its gradient."""
        x = Value(np.array([1000.0, -1000.0, 0.0]))
        out = ops.softplus(x)
        assert out.data[0] == 1000.0
        assert out.data[1] == pytest.approx(0.0, abs=1e-300)
        assert out.data[2] == pytest.approx(math.log(2.0))
        ops.total(out).backward()
        assert np.all(np.isfinite(x.grad))
        assert x.grad.tolist() == pytest.approx([1.0, 0.0, 0.5])

    def test_clamp_blocks_gradient_outside(self) -> None:
        """Test clamp passes gradient only inside the interval."""
        x = Value(np.array([-0.5, 0.5, 1.5]))
        ops.total(ops.clamp(x, 0.0, 1.0)).backward()
        assert x.grad.tolist() == [0.0, 1.0, 0.0]

    def test_variance3(self) -> None:
        """Test the population variance of three scalars."""
        out = ops.variance3(constant(0.5), constant(0.1), constant(0.5))
        assert out.item() == pytest.approx(0.32 / 9.0)
        with pytest.raises(ShapeError):
            ops.variance3(constant([1.0]), constant(0.1), constant(0.5))

    def test_mean_over_samples_is_permutation_invariant(self) -> None:
        """Test pooling does not depend on the row order."""
        m = np.random.default_rng(0).standard_normal((6, 4))
        a = ops.mean_over_samples(constant(m)).data
        b = ops.mean_over_samples(constant(m[::-1])).data
        np.testing.assert_allclose(a, b, rtol=1e-14)


class TestStableCubic:
    """Tests for the bounded cubic activation."""

    @pytest.fixture
    def act(self) -> StableCubicParams:
        return StableCubicParams.register(ParamStore(np.float64), "act")

    def test_initial_coefficients(self, act: StableCubicParams) -> None:
        """Test coefficients start at 0.1, 0.01 and 0.001."""
        assert act.coefficients() == pytest.approx((0.1, 0.01, 0.001))

    def test_value_at_one(self, act: StableCubicParams) -> None:
        """Test the activation of 1 is 0.111."""
        assert stable_cubic(constant(1.0), act).item() == pytest.approx(0.111)

    def test_negative_inputs_vanish(self, act: StableCubicParams) -> None:
        """Test negative inputs map to zero."""
        assert stable_cubic(constant(-5.0), act).item() == 0.0

    def test_saturates_at_clamp(self, act: StableCubicParams) -> None:
        """Test inputs above 10 give the upper bound with zero input gradient."""
        z = Value(np.array(25.0))
        out = stable_cubic(z, act)
        assert out.item() == pytest.approx(act.upper_bound())
        assert act.upper_bound() == pytest.approx(3.0)
        out.backward()
        assert z.grad.item() == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_and_bounded_below(self, seed: int) -> None:
        """Test the activation never decreases, never goes below zero and rises strictly on (0, 10]."""
        rng = np.random.default_rng(seed)
        store = ParamStore(np.float64)
        act = StableCubicParams(
            log_alpha=store.register("act.log_alpha", rng.normal(math.log(0.1), 1.0)),
            log_beta=store.register("act.log_beta", rng.normal(math.log(0.01), 1.0)),
            log_gamma=store.register("act.log_gamma", rng.normal(math.log(0.001), 1.0)),
        )
        z = np.linspace(-30.0, 30.0, 6001)
        out = stable_cubic(constant(z), act).data
        steps = np.diff(out)
        assert np.all(steps >= 0.0)
        assert out.min() == 0.0
        assert np.all(out[z <= 0.0] == 0.0)
        rising = (z[1:] > 0.0) & (z[1:] <= 10.0)
        assert np.all(steps[rising] > 0.0)
        assert out.max() == pytest.approx(act.upper_bound())


class TestParamStore:
    """Tests for ParamStore and its binary format."""

    @pytest.fixture
    def store(self) -> ParamStore:
        s = ParamStore(np.float32)
        s.register("layer.weight", np.arange(6, dtype=np.float64).reshape(2, 3))
        s.register("layer.bias", [0.5, -0.5, 1.5])
        s.register("act.log_alpha", math.log(0.1))
        return s

    def test_counts(self, store: ParamStore) -> None:
        """Test scalar counts overall and by prefix."""
        assert store.total_count == 10
        assert store.count("layer.") == 9

    def test_duplicate_name(self, store: ParamStore) -> None:
        """Test a name can only be registered once."""
        with pytest.raises(InvalidArgumentError, match="already registered"):
            store.register("layer.bias", [0.0, 0.0, 0.0])

    def test_header_layout(self, store: ParamStore) -> None:
        """Test the blob starts with magic, version and manifest length."""
        blob = store.state_bytes()
        magic, version, manifest_len = struct.unpack_from("<4sII", blob)
        assert magic == FORMAT_MAGIC
        assert version == 1
        assert blob[12 + manifest_len : 16 + manifest_len] == np.float32(0.0).tobytes()

    def test_bytes_restore_store(self, store: ParamStore) -> None:
        """Test parsing the serialised bytes gives an equal store."""
        assert ParamStore.from_bytes(store.state_bytes()).equals(store)

    def test_truncated_payload(self, store: ParamStore) -> None:
        """Test a short payload raises CorruptManifestError."""
        with pytest.raises(CorruptManifestError):
            ParamStore.from_bytes(store.state_bytes()[:-2])

    def test_bad_magic(self, store: ParamStore) -> None:
        """Test an unknown magic raises CorruptManifestError."""
        with pytest.raises(CorruptManifestError, match="magic"):
            ParamStore.from_bytes(b"XXXX" + store.state_bytes()[4:])

    def test_version_mismatch(self, store: ParamStore) -> None:
        """Test a future format version raises VersionMismatchError."""
        blob = store.state_bytes()
        with pytest.raises(VersionMismatchError):
            ParamStore.from_bytes(blob[:4] + struct.pack("<I", 2) + blob[8:])

    def test_load_state_is_all_or_nothing(self, store: ParamStore) -> None:
        """Test a shape mismatch leaves every tensor untouched."""
        other = ParamStore(np.float32)
        other.register("layer.weight", np.zeros((2, 3)))
        other.register("layer.bias", np.zeros(4))
        other.register("act.log_alpha", 0.0)
        before = store.state_bytes()
        with pytest.raises(ShapeMismatchError):
            store.load_state(other)
        assert store.state_bytes() == before

    def test_load_state_name_mismatch(self, store: ParamStore) -> None:
        """Test differing names raise CheckpointError."""
        other = ParamStore(np.float32)
        other.register("layer.weight", np.zeros((2, 3)))
        with pytest.raises(CheckpointError, match="names differ"):
            store.load_state(other)

    def test_snapshot_has_own_gradients(self, store: ParamStore) -> None:
        """Test gradients on a snapshot leave the original untouched."""
        snap = store.snapshot()
        ops.total(snap["layer.bias"]).backward()
        assert snap["layer.bias"].grad.tolist() == [1.0, 1.0, 1.0]
        assert store["layer.bias"].grad.tolist() == [0.0, 0.0, 0.0]

    def test_to_json(self, store: ParamStore) -> None:
        """Test the inspection export lists shapes and values."""
        exported = store.to_json()
        assert exported["layer.weight"]["shape"] == [2, 3]
        assert exported["layer.bias"]["values"] == [0.5, -0.5, 1.5]


class TestGradCheck:
    """Tests for finite-difference gradient verification."""

    @pytest.mark.parametrize("name", list(PRIMITIVE_SUITES))
    def test_primitive_suites(self, name: str) -> None:
        """Test every primitive's analytic gradient matches central differences."""
        result = check_suite(name, trials=3, seed=1)
        assert result.threshold == PRIMITIVE_THRESHOLD
        assert result.passed, f"{name}: {result.max_rel_error:.3e}"

    def test_model_trajectory_loss(self) -> None:
        """Test the toy model's loss gradient matches central differences."""
        result = check_model(seed=0, max_coords=4)
        assert result.threshold == MODEL_THRESHOLD
        assert result.passed, f"{result.max_rel_error:.3e}"

    def test_detects_wrong_gradient(self) -> None:
        """Test a backward closure that drops a factor of two is caught."""
        store = ParamStore(np.float64)
        store.register("x", [0.3, -1.2])

        def doubled_with_bad_grad(s: ParamStore) -> Value:
            x = s["x"]
            out = Value(2.0 * x.data, parents=(x,), op="bad")

            def _backward() -> None:
                x.grad += out.grad

            out._backward = _backward
            return ops.total(out)

        assert grad_check(doubled_with_bad_grad, store) == pytest.approx(1.0, rel=1e-4)

    def test_requires_float64(self) -> None:
        """Test float32 stores are rejected."""
        store = ParamStore(np.float32)
        store.register("x", [1.0])
        with pytest.raises(InvalidArgumentError, match="float64"):
            grad_check(lambda s: ops.total(s["x"]), store)

    def test_eps_range(self) -> None:
        """Test eps outside [1e-7, 1e-4] is rejected."""
        store = ParamStore(np.float64)
        store.register("x", [1.0])
        with pytest.raises(InvalidArgumentError, match="eps"):
            grad_check(lambda s: ops.total(s["x"]), store, eps=1e-2)

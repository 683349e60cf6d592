"""Reverse-mode differentiation over dense numpy arrays.

A :class:`Value` wraps an array, its gradient accumulator and the closure
that propagates the gradient to its parents. Every operation below builds
one node; :meth:`Value.backward` sorts the graph once and runs each closure
exactly once in reverse topological order.

Binary operations accept operands of identical shape, or a 0-d operand
broadcast against the other one. Nothing else broadcasts.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from neural_globopt.exceptions import ShapeError

Array = npt.NDArray[np.floating[Any]]


def _noop() -> None:
    return None


class Value:
    """A node of the computation graph."""

    __slots__ = ("_backward", "_parents", "data", "grad", "op")

    def __init__(
        self,
        data: npt.ArrayLike,
        *,
        parents: tuple[Value, ...] = (),
        op: str = "",
        dtype: npt.DTypeLike | None = None,
    ) -> None:
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: Array = arr
        self.grad: Array = np.zeros_like(arr)
        self.op = op
        self._parents = parents
        self._backward: Callable[[], None] = _noop

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self, free_graph: bool = True) -> None:
        """Accumulate d(self)/d(node) into every node reachable from self."""
        if self.data.size != 1:
            raise ShapeError("backward", f"expected a scalar output, got shape {self.shape}")
        order = _topological_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            node._backward()
        if free_graph:
            for node in order:
                node._parents = ()
                node._backward = _noop

    def __add__(self, other: Value | float) -> Value:
        return add(self, _lift(other, self))

    def __radd__(self, other: float) -> Value:
        return add(_lift(other, self), self)

    def __sub__(self, other: Value | float) -> Value:
        return sub(self, _lift(other, self))

    def __rsub__(self, other: float) -> Value:
        return sub(_lift(other, self), self)

    def __mul__(self, other: Value | float) -> Value:
        return mul(self, _lift(other, self))

    def __rmul__(self, other: float) -> Value:
        return mul(_lift(other, self), self)

    def __neg__(self) -> Value:
        return neg(self)

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, dtype={self.dtype}, op={self.op!r})"


def _lift(other: Value | float, like: Value) -> Value:
    if isinstance(other, Value):
        return other
    return Value(np.asarray(other, dtype=like.dtype))


def constant(data: npt.ArrayLike, dtype: npt.DTypeLike = np.float64) -> Value:
    """Leaf Value that is not a parameter."""
    return Value(np.asarray(data, dtype=dtype))


def _topological_order(root: Value) -> list[Value]:
    order: list[Value] = []
    visited: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node._parents if id(p) not in visited)
    return order


def _check_binary(op: str, a: Value, b: Value) -> None:
    if a.shape != b.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ShapeError(op, f"incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(grad: Array, shape: tuple[int, ...]) -> Array:
    if shape == () and grad.ndim != 0:
        return np.asarray(grad.sum(), dtype=grad.dtype)
    return grad


def add(a: Value, b: Value) -> Value:
    """Elementwise a + b."""
    _check_binary("add", a, b)
    out = Value(a.data + b.data, parents=(a, b), op="add")

    def _backward() -> None:
        a.grad += _reduce_to(out.grad, a.shape)
        b.grad += _reduce_to(out.grad, b.shape)

    out._backward = _backward
    return out


def sub(a: Value, b: Value) -> Value:
    """Elementwise a - b."""
    _check_binary("sub", a, b)
    out = Value(a.data - b.data, parents=(a, b), op="sub")

    def _backward() -> None:
        a.grad += _reduce_to(out.grad, a.shape)
        b.grad -= _reduce_to(out.grad, b.shape)

    out._backward = _backward
    return out


def mul(a: Value, b: Value) -> Value:
    """Elementwise a * b."""
    _check_binary("mul", a, b)
    out = Value(a.data * b.data, parents=(a, b), op="mul")

    def _backward() -> None:
        a.grad += _reduce_to(out.grad * b.data, a.shape)
        b.grad += _reduce_to(out.grad * a.data, b.shape)

    out._backward = _backward
    return out


def neg(a: Value) -> Value:
    """-a"""
    out = Value(-a.data, parents=(a,), op="neg")

    def _backward() -> None:
        a.grad -= out.grad

    out._backward = _backward
    return out


def square(a: Value) -> Value:
    """a ** 2"""
    out = Value(a.data * a.data, parents=(a,), op="square")

    def _backward() -> None:
        a.grad += 2.0 * a.data * out.grad

    out._backward = _backward
    return out


def exp(a: Value) -> Value:
    """e ** a"""
    out = Value(np.exp(a.data), parents=(a,), op="exp")

    def _backward() -> None:
        a.grad += out.data * out.grad

    out._backward = _backward
    return out


def absolute(a: Value) -> Value:
    """abs(a); the gradient at 0 is 0."""
    out = Value(np.abs(a.data), parents=(a,), op="abs")

    def _backward() -> None:
        a.grad += np.sign(a.data) * out.grad

    out._backward = _backward
    return out


def relu(a: Value) -> Value:
    """max(a, 0)"""
    mask = a.data > 0
    out = Value(np.where(mask, a.data, 0).astype(a.dtype), parents=(a,), op="relu")

    def _backward() -> None:
        a.grad += np.where(mask, out.grad, 0).astype(a.dtype)

    out._backward = _backward
    return out


def tanh(a: Value) -> Value:
    """Hyperbolic tangent."""
    out = Value(np.tanh(a.data), parents=(a,), op="tanh")

    def _backward() -> None:
        a.grad += (1.0 - out.data * out.data) * out.grad

    out._backward = _backward
    return out


def softplus(a: Value) -> Value:
    """Overflow-safe softplus: max(x, 0) + log1p(exp(-|x|))."""
    x = a.data
    out = Value(np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x))), parents=(a,), op="softplus")

    def _backward() -> None:
        a.grad += expit(x).astype(a.dtype) * out.grad

    out._backward = _backward
    return out


def clamp_max(a: Value, limit: float) -> Value:
    """min(a, limit); the gradient is zero where a > limit."""
    mask = a.data <= limit
    out = Value(np.minimum(a.data, np.asarray(limit, dtype=a.dtype)), parents=(a,), op="clamp_max")

    def _backward() -> None:
        a.grad += np.where(mask, out.grad, 0).astype(a.dtype)

    out._backward = _backward
    return out


def clamp(a: Value, lo: float, hi: float) -> Value:
    """Clip to [lo, hi]; the gradient is zero outside the interval."""
    mask = (a.data >= lo) & (a.data <= hi)
    clipped = np.clip(a.data, np.asarray(lo, dtype=a.dtype), np.asarray(hi, dtype=a.dtype))
    out = Value(clipped, parents=(a,), op="clamp")

    def _backward() -> None:
        a.grad += np.where(mask, out.grad, 0).astype(a.dtype)

    out._backward = _backward
    return out


def linear(w: Value, b: Value, x: Value) -> Value:
    """x @ W + b for x of shape (in,) or (n, in) and W of shape (in, out)."""
    if w.data.ndim != 2 or b.shape != (w.shape[1],):
        raise ShapeError("linear", f"weight {w.shape} and bias {b.shape} do not match")
    if x.data.ndim not in (1, 2) or x.shape[-1] != w.shape[0]:
        raise ShapeError("linear", f"input {x.shape} does not match weight {w.shape}")
    out = Value(x.data @ w.data + b.data, parents=(w, b, x), op="linear")

    def _backward() -> None:
        g = out.grad
        if x.data.ndim == 1:
            w.grad += np.outer(x.data, g)
            b.grad += g
        else:
            w.grad += x.data.T @ g
            b.grad += g.sum(axis=0)
        x.grad += g @ w.data.T

    out._backward = _backward
    return out


def concat(parts: Sequence[Value]) -> Value:
    """Concatenate along the last axis.

    1-D concatenation treats 0-d parts as length-one vectors; 2-D parts must
    share their row count.
    """
    if not parts:
        raise ShapeError("concat", "nothing to concatenate")
    ndim = max(p.data.ndim for p in parts)
    if ndim == 1:
        arrays = [np.atleast_1d(p.data) for p in parts]
    elif ndim == 2 and all(p.data.ndim == 2 for p in parts):
        rows = {p.shape[0] for p in parts}
        if len(rows) != 1:
            raise ShapeError("concat", f"row counts differ: {sorted(rows)}")
        arrays = [p.data for p in parts]
    else:
        raise ShapeError("concat", f"cannot concatenate shapes {[p.shape for p in parts]}")

    widths = [arr.shape[-1] for arr in arrays]
    offsets = np.cumsum([0, *widths])
    out = Value(np.concatenate(arrays, axis=-1), parents=tuple(parts), op="concat")

    def _backward() -> None:
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:], strict=True):
            p.grad += out.grad[..., start:stop].reshape(p.shape)

    out._backward = _backward
    return out


def mean_over_samples(m: Value) -> Value:
    """Mean over the sample axis of an (n, d) matrix."""
    if m.data.ndim != 2:
        raise ShapeError("mean_over_samples", f"expected (n, d), got {m.shape}")
    n = m.shape[0]
    out = Value(m.data.mean(axis=0), parents=(m,), op="mean_over_samples")

    def _backward() -> None:
        m.grad += np.broadcast_to(out.grad / n, m.shape)

    out._backward = _backward
    return out


def tile_rows(v: Value, n: int) -> Value:
    """Repeat a vector (or scalar) as n rows: (d,) -> (n, d), () -> (n, 1)."""
    if v.data.ndim > 1:
        raise ShapeError("tile_rows", f"expected a vector or scalar, got {v.shape}")
    row = np.atleast_1d(v.data)
    out = Value(np.tile(row, (n, 1)), parents=(v,), op="tile_rows")

    def _backward() -> None:
        v.grad += out.grad.sum(axis=0).reshape(v.shape)

    out._backward = _backward
    return out


def take(v: Value, index: int) -> Value:
    """Scalar element of a vector."""
    if v.data.ndim != 1:
        raise ShapeError("take", f"expected a vector, got {v.shape}")
    out = Value(v.data[index], parents=(v,), op="take")

    def _backward() -> None:
        v.grad[index] += out.grad

    out._backward = _backward
    return out


def total(v: Value) -> Value:
    """Sum of all entries."""
    out = Value(np.asarray(v.data.sum(), dtype=v.dtype), parents=(v,), op="sum")

    def _backward() -> None:
        v.grad += np.broadcast_to(out.grad, v.shape)

    out._backward = _backward
    return out


def variance3(a: Value, b: Value, c: Value) -> Value:
    """Population variance of three scalars."""
    for p in (a, b, c):
        if p.data.ndim != 0:
            raise ShapeError("variance3", f"expected scalars, got {p.shape}")
    mean = (a.data + b.data + c.data) / 3.0
    dev = [a.data - mean, b.data - mean, c.data - mean]
    out = Value((dev[0] ** 2 + dev[1] ** 2 + dev[2] ** 2) / 3.0, parents=(a, b, c), op="variance3")

    def _backward() -> None:
        for p, d in zip((a, b, c), dev, strict=True):
            p.grad += (2.0 / 3.0) * d * out.grad

    out._backward = _backward
    return out

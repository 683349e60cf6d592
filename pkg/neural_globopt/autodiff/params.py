"""Named parameter storage and its binary serialisation.

Binary layout, all integers little-endian::

    b"NGOP" | uint32 version | uint32 manifest length | manifest (UTF-8 JSON)
    | tensor bytes in manifest order

The manifest is a list of ``{"name", "shape", "dtype"}`` objects. Tensors are
stored as little-endian ``float32`` or ``float64`` in C order.
"""

from __future__ import annotations

import json
import logging
import struct
from collections.abc import Iterator
from typing import Any

import numpy as np
import numpy.typing as npt

from neural_globopt.autodiff.value import Array, Value
from neural_globopt.exceptions import (
    CheckpointError,
    CorruptManifestError,
    InvalidArgumentError,
    ShapeMismatchError,
    VersionMismatchError,
)

logger = logging.getLogger(__name__)

FORMAT_MAGIC = b"NGOP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


def _readonly(values: npt.ArrayLike, dtype: npt.DTypeLike) -> Array:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class ParamStore:
    """Ordered collection of named leaf Values of one float width."""

    def __init__(self, dtype: npt.DTypeLike = np.float32) -> None:
        self.dtype = np.dtype(dtype)
        if self.dtype.name not in _DTYPES:
            raise InvalidArgumentError(f"Unsupported parameter dtype {self.dtype}")
        self._values: dict[str, Value] = {}

    def register(self, name: str, values: npt.ArrayLike) -> Value:
        if name in self._values:
            raise InvalidArgumentError(f"Parameter '{name}' is already registered")
        value = Value(_readonly(values, self.dtype))
        self._values[name] = value
        return value

    def __getitem__(self, name: str) -> Value:
        try:
            return self._values[name]
        except KeyError:
            raise KeyError(f"No parameter named '{name}'") from None

    def __contains__(self, name: object) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def items(self) -> Iterator[tuple[str, Value]]:
        return iter(self._values.items())

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: v.shape for name, v in self._values.items()}

    @property
    def total_count(self) -> int:
        return sum(v.data.size for v in self._values.values())

    def count(self, prefix: str) -> int:
        """Number of scalars in parameters whose name starts with ``prefix``."""
        return sum(v.data.size for name, v in self._values.items() if name.startswith(prefix))

    def assign(self, name: str, values: npt.ArrayLike) -> None:
        """Replace the data of one parameter, keeping its shape and dtype."""
        current = self[name]
        arr = _readonly(values, self.dtype)
        if arr.shape != current.shape:
            raise ShapeMismatchError(name, current.shape, arr.shape)
        current.data = arr

    def zero_grad(self) -> None:
        for v in self._values.values():
            v.zero_grad()

    def grads(self) -> dict[str, Array]:
        return {name: v.grad.copy() for name, v in self._values.items()}

    def arrays(self) -> dict[str, Array]:
        return {name: v.data for name, v in self._values.items()}

    def snapshot(self) -> ParamStore:
        """Fresh leaves over the same read-only data, with their own gradients."""
        snap = ParamStore(self.dtype)
        for name, v in self._values.items():
            leaf = Value(v.data)
            snap._values[name] = leaf
        return snap

    def astype(self, dtype: npt.DTypeLike) -> ParamStore:
        converted = ParamStore(dtype)
        for name, v in self._values.items():
            converted.register(name, v.data)
        return converted

    def equals(self, other: ParamStore) -> bool:
        """Bit-exact comparison of names, shapes, dtypes and values."""
        if list(self) != list(other) or self.dtype != other.dtype:
            return False
        return all(
            np.array_equal(v.data, other[name].data) for name, v in self._values.items()
        )

    def state_bytes(self) -> bytes:
        """Serialise every tensor in registration order."""
        manifest = [
            {"name": name, "shape": list(v.shape), "dtype": self.dtype.name}
            for name, v in self._values.items()
        ]
        header = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
        wire = _DTYPES[self.dtype.name]
        payload = b"".join(
            np.ascontiguousarray(v.data, dtype=wire).tobytes() for v in self._values.values()
        )
        return _HEADER.pack(FORMAT_MAGIC, FORMAT_VERSION, len(header)) + header + payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> ParamStore:
        """Parse a serialised store; raises a CheckpointError subclass on bad input."""
        if len(blob) < _HEADER.size:
            raise CorruptManifestError(f"File too short for a header ({len(blob)} bytes)")
        magic, version, manifest_len = _HEADER.unpack_from(blob)
        if magic != FORMAT_MAGIC:
            raise CorruptManifestError(f"Bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"Parameter file version {version}, expected {FORMAT_VERSION}"
            )
        start = _HEADER.size
        if len(blob) < start + manifest_len:
            raise CorruptManifestError("Manifest is truncated")
        try:
            manifest: list[dict[str, Any]] = json.loads(blob[start : start + manifest_len])
            entries = [
                (str(e["name"]), tuple(int(d) for d in e["shape"]), _DTYPES[e["dtype"]])
                for e in manifest
            ]
        except (ValueError, KeyError, TypeError) as e:
            raise CorruptManifestError(f"Unreadable manifest: {e}") from e
        if not entries:
            raise CorruptManifestError("Manifest lists no tensors")

        dtypes = {wire for _, _, wire in entries}
        if len(dtypes) != 1:
            raise CorruptManifestError("Mixed tensor dtypes in one file")
        wire = dtypes.pop()

        offset = start + manifest_len
        expected = offset + sum(int(np.prod(shape)) * wire.itemsize for _, shape, _ in entries)
        if len(blob) != expected:
            raise CorruptManifestError(
                f"Payload has {len(blob) - offset} bytes, manifest requires {expected - offset}"
            )

        store = cls("float32" if wire.itemsize == 4 else "float64")
        for name, shape, _ in entries:
            size = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype=wire, count=size, offset=offset).reshape(shape)
            store.register(name, arr.astype(store.dtype))
            offset += size * wire.itemsize
        return store

    def load_state(self, other: ParamStore) -> None:
        """Copy every tensor of ``other`` into this store, all or nothing."""
        if list(self) != list(other):
            missing = [n for n in self if n not in other]
            extra = [n for n in other if n not in self]
            raise CheckpointError(
                f"Parameter names differ: missing {missing[:3]}, unexpected {extra[:3]}"
            )
        for name, v in self._values.items():
            if other[name].shape != v.shape:
                raise ShapeMismatchError(name, v.shape, other[name].shape)
        for name, v in other.items():
            self.assign(name, v.data)
        logger.debug(f"Loaded {len(self)} tensors ({self.total_count} scalars)")

    def to_json(self) -> dict[str, Any]:
        """Inspection export: shape, dtype and nested values per tensor."""
        return {
            name: {"shape": list(v.shape), "dtype": self.dtype.name, "values": v.data.tolist()}
            for name, v in self._values.items()
        }

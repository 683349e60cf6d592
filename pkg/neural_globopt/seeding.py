"""Hierarchical seeds and counter-based random generators."""

from __future__ import annotations

from enum import IntEnum

import numpy as np

SEED_BITS = 64
NAMESPACE_BIT = 1 << (SEED_BITS - 1)
_LOW_MASK = NAMESPACE_BIT - 1

FUNCTION_STREAM = 0
NOISE_STREAM = 1


class Namespace(IntEnum):
    """Disjoint families of case seeds."""

    TRAIN = 0
    EVAL = 1


def derive_seed(parent: int, *path: int) -> int:
    """Derive a 64-bit child seed from ``parent`` along ``path``.

    ``derive_seed(s, a, b)`` is independent of the order in which other
    children are drawn, so any single case can be regenerated in isolation.
    """
    if parent < 0 or any(p < 0 for p in path):
        raise ValueError("Seeds and path components must be non-negative")
    words = np.random.SeedSequence(entropy=parent, spawn_key=path).generate_state(
        2, dtype=np.uint32
    )
    return (int(words[1]) << 32) | int(words[0])


def case_seed(run_seed: int, namespace: Namespace, *path: int) -> int:
    """Case seed inside ``namespace``; the top bit marks evaluation seeds."""
    seed = derive_seed(run_seed, int(namespace), *path) & _LOW_MASK
    if namespace is Namespace.EVAL:
        seed |= NAMESPACE_BIT
    return seed


def namespace_of(seed: int) -> Namespace:
    """Namespace a case seed was drawn from."""
    return Namespace.EVAL if seed & NAMESPACE_BIT else Namespace.TRAIN


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

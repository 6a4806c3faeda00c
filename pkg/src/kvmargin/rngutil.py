"""Deterministic random-stream derivation.

Every stochastic routine takes an integer ``seed`` and derives independent
child streams through ``numpy.random.SeedSequence`` spawn keys, one per
(class, repeat, trial, ...) path.  Streams therefore do not depend on
execution order or thread scheduling: repeat 7 of class 3 draws the same
subsets whether it runs first or last.
"""

import hashlib

import numpy as np

__all__ = ["child_seed", "stream"]

_MASK64 = (1 << 64) - 1


def _component(value) -> int:
    """Map one path component to a stable 64-bit integer."""
    if isinstance(value, (int, np.integer)):
        return int(value) & _MASK64
    if isinstance(value, str):
        digest = hashlib.sha256(value.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream path components must be int or str, got {type(value)!r}")


def stream(seed: int, *path) -> np.random.Generator:
    """Generator for ``seed`` refined by a path of ints/strings."""
    key = tuple(_component(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _MASK64, spawn_key=key))


def child_seed(seed: int, *path) -> int:
    """A 64-bit seed for handing down to another seed-taking routine."""
    key = tuple(_component(p) for p in path)
    state = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=key)
    return int(state.generate_state(1, np.uint64)[0])

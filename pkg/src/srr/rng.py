"""Deterministic random streams.

All randomness in the library flows through Philox 4x64, a counter-based generator
whose output is identical across platforms for a given key. Independent substreams
are derived by keying, not by jumping, so trial i of an experiment sees the same
stream regardless of execution order or thread count.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "derive_seed"]

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator keyed by (seed, stream ids).

    Philox takes a two-word 64-bit key; additional stream ids are folded into the
    second word with odd multipliers so distinct id tuples give distinct keys.
    """
    key2 = 0
    for i, s in enumerate(stream):
        key2 ^= ((int(s) & _MASK64) * (0x9E3779B97F4A7C15 + 2 * i + 1)) & _MASK64
    bitgen = np.random.Philox(key=np.array([int(seed) & _MASK64, key2], dtype=np.uint64))
    return np.random.Generator(bitgen)


def derive_seed(seed: int, *stream: int) -> int:
    """A 64-bit sub-seed for handing to components that key their own generator."""
    return int(make_rng(seed, *stream).integers(0, _MASK64, dtype=np.uint64))

"""Keyed random substreams.

Every stochastic draw in the simulator comes from a generator built from a
tuple ``(seed, label, *counters)``. Two calls with the same key get the same
stream no matter what else ran in between, so adding a client or swapping a
selection policy cannot shift anybody else's randomness.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def label_code(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, label: str, *counters: int) -> np.random.Generator:
    key = [int(seed) & _MASK64, label_code(label), *(int(c) for c in counters)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def derive_seed(seed: int, label: str) -> int:
    """64-bit child seed for handing a sub-config its own seed field."""
    state = np.random.SeedSequence([int(seed) & _MASK64, label_code(label)]).generate_state(2, np.uint64)
    return (int(state[0]) << 32 ^ int(state[1])) & _MASK64

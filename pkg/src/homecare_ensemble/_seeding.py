from __future__ import annotations

import zlib

import numpy as np


def derive_seed(base: int, *parts) -> int:
    """Stable 63-bit seed from a base seed and any printable key parts."""
    tag = zlib.crc32("|".join(str(p) for p in parts).encode("utf-8"))
    state = np.random.SeedSequence([int(base) & (2**64 - 1), tag]).generate_state(2, np.uint64)
    return int(state[0] >> np.uint64(1))

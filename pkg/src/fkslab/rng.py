"""Keyed random streams: every stream is a pure function of (seed, key...)."""
import zlib

import numpy as np


def _word(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def stream(seed, *key):
    """Philox generator keyed by the run seed and a tuple of ints/strings."""
    seq = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(_word(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))

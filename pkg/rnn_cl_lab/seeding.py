"""Named random streams derived from a single master seed."""

from __future__ import annotations

import zlib

import numpy as np


def rng_stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, name, *keys)``.

    Streams are keyed by a CRC32 of ``name`` so that adding or consuming
    one stream never shifts another.
    """
    tag = zlib.crc32(name.encode("utf-8"))
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, *(int(k) for k in keys)))
    return np.random.default_rng(seq)

"""Seeded substreams.

Every random draw in the package comes from a counter-based Philox
generator keyed by ``(seed, stage, index...)`` so that results do not depend
on execution order.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def substream(seed, *keys):
    """Return a generator for the substream identified by ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))

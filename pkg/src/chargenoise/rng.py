"""Seeded, labelled random streams.

Every generator draws from its own stream derived from ``(seed, label)``, so
adding or removing one generator never shifts the numbers another one sees.
"""

import zlib

import numpy as np

STREAMS = ("powerlaw", "telegraph", "jumps", "flux", "shots", "geometry", "scan")


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def substream(seed: int, label: str, *extra: int) -> np.random.Generator:
    """Independent generator for ``label`` under a 64-bit ``seed``.

    ``extra`` integers further split the stream (e.g. per realization or per
    scan index) without touching the parent.
    """
    if seed is None:
        raise ValueError("a seed is required; runs must be reproducible")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_label_key(label), *map(int, extra)))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng_or_seed, label: str = "default") -> np.random.Generator:
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return substream(rng_or_seed, label)

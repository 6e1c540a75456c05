"""Keyed counter-based random streams.

Every stream is a Philox generator whose 128-bit key is a hash of the
global seed and an entity key, so draws for one entity never depend on how
many other entities exist or in which order they were generated.
"""

import hashlib

import numpy as np


def _key_words(seed, keys):
    text = "\x1f".join([str(int(seed))] + [str(k) for k in keys])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
    return np.frombuffer(digest, dtype="<u8").copy()


def keyed_generator(seed, *keys):
    """Return a ``numpy.random.Generator`` dedicated to ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(key=_key_words(seed, keys)))


def derive_seed(seed, *keys):
    """Fold ``(seed, *keys)`` into a single non-negative 63-bit integer seed."""
    return int(_key_words(seed, keys)[0] >> np.uint64(1))


def keyed_permutation(n, seed, *keys):
    return keyed_generator(seed, *keys).permutation(n)

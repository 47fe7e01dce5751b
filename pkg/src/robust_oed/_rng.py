"""Named, index-addressable random streams derived from one master seed."""

import hashlib
import zlib

import numpy as np


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def derive_seed_sequence(seed, name, *index):
    return np.random.SeedSequence(
        entropy=int(seed), spawn_key=(stream_key(name),) + tuple(int(i) for i in index)
    )


def derive_rng(seed, name, *index):
    """Generator for stream ``name`` at position ``index``.

    The result depends only on ``(seed, name, index)``, never on how many
    other streams were created before it.
    """
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(seed, name, *index)))


def content_rng(seed, name, payload):
    """Generator keyed by arbitrary bytes (e.g. a packed failure mask)."""
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    words = np.frombuffer(digest, dtype="<u4")
    return derive_rng(seed, name, *words.tolist())

"""Seed derivation shared by every stochastic component.

Substreams are keyed by content (document id, run index, scope key) rather
than by scheduling order, so splitting work across processes never changes
the numbers drawn.
"""

import hashlib
import random
import secrets

import numpy as np


def derive_seed(master_seed, *keys):
    """Return a 64-bit integer seed for ``(master_seed, *keys)``.

    Uses blake2b over the repr of each key, which is stable across
    interpreter runs and platforms (unlike ``hash``).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(repr(int(master_seed)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(repr(key).encode("utf-8"))
    return int.from_bytes(h.digest(), "big")


def py_rng(master_seed, *keys):
    return random.Random(derive_seed(master_seed, *keys))


def np_rng(master_seed, *keys):
    return np.random.default_rng(derive_seed(master_seed, *keys))


def entropy_seed():
    """A fresh 32-bit seed for runs where the caller did not pick one."""
    return secrets.randbits(32)

"""Deterministic seed derivation for named random streams.

Every random draw in training flows from (base_seed, stream tags), so no
evolving RNG state needs to be checkpointed: a stream is reconstructed
from its tags alone.
"""

import hashlib


def derive_seed(base_seed, *tags):
    """Map a base seed plus string/int tags to a stable 63-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base_seed)).encode())
    for t in tags:
        h.update(b"/")
        h.update(str(t).encode())
    return int.from_bytes(h.digest(), "little") >> 1

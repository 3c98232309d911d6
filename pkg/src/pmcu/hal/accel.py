"""Computing-accelerator backends: checksum, digest and a seeded RNG."""

from __future__ import annotations

import hashlib
import random
import zlib


def crc32(data: bytes) -> int:
    # zlib implements the reflected 0x04C11DB7 polynomial with 0xFFFFFFFF pre/post xor
    return zlib.crc32(data) & 0xFFFFFFFF


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class Rng:
    """Deterministic byte stream; shares the machine's seeded generator when given one."""

    def __init__(self, source: random.Random | int = 0):
        self._r = source if isinstance(source, random.Random) else random.Random(source)

    def bytes(self, count: int) -> bytes:
        if count < 0:
            raise ValueError("count must be >= 0")
        return self._r.randbytes(count)

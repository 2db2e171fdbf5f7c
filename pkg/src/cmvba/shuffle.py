"""Seed-keyed deterministic shuffling.

The stream is pinned so traces stay reproducible: block ``k`` is
``SHA-256(seed || k as 8-byte big-endian)`` and each block yields four
64-bit big-endian words.  Integers below a bound are drawn by rejection
sampling on those words, and shuffling is the classic Fisher-Yates pass
from the last position down.
"""

from __future__ import annotations

import hashlib
from typing import Sequence, TypeVar

T = TypeVar("T")

_WORD = 1 << 64


class SeedStream:
    def __init__(self, seed: bytes):
        self.seed = bytes(seed)
        self._counter = 0
        self._words: list[int] = []

    def next_word(self) -> int:
        if not self._words:
            block = hashlib.sha256(self.seed + self._counter.to_bytes(8, "big")).digest()
            self._counter += 1
            self._words = [int.from_bytes(block[i:i + 8], "big") for i in (24, 16, 8, 0)]
        return self._words.pop()

    def randbelow(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = _WORD - (_WORD % bound)
        while True:
            w = self.next_word()
            if w < limit:
                return w % bound


def seeded_shuffle(items: Sequence[T], seed: bytes) -> list[T]:
    out = list(items)
    stream = SeedStream(seed)
    for i in range(len(out) - 1, 0, -1):
        j = stream.randbelow(i + 1)
        out[i], out[j] = out[j], out[i]
    return out

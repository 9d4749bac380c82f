"""Synthetic target whose only interesting bytes are a 16-byte key prefix.

Each correctly guessed key byte (in order) unlocks one edge; everything
after byte 15 is consumed by one loop that contributes a single edge no
matter what it contains.  Ground-truth usefulness is therefore known by
construction, which makes this the calibration target for the sieve.
"""

from __future__ import annotations

import random

from .base import TargetProgram, Tracer, block

KEY = b"SIEVE\x00key\x7f16\xfe\x01!?"
KEY_LEN = len(KEY)

ENTRY = block("magic16.entry")
PREFIX = [block(f"magic16.prefix{i}") for i in range(KEY_LEN)]
LOOP = block("magic16.loop")


class Magic16(TargetProgram):
    name = "magic16"

    def _parse(self, data: bytes, t: Tracer) -> None:
        t.hit(ENTRY)
        for i in range(min(KEY_LEN, len(data))):
            t.tick()
            if data[i] != KEY[i]:
                return
            t.hit(PREFIX[i])
        if len(data) < KEY_LEN:
            return
        t.tick(len(data) - KEY_LEN)
        t.hit(LOOP)

    def seeds(self) -> list[bytes]:
        return make_inputs(12, seed=0x16)


def make_inputs(count: int, seed: int, length: int = 64, max_prefix: int = 12) -> list[bytes]:
    """Inputs carrying a correct key prefix of random length, one wrong byte
    after it and random filler."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        k = rng.randint(0, max_prefix)
        wrong = rng.choice([v for v in range(256) if v != KEY[k]])
        tail = bytes(rng.randrange(256) for _ in range(length - k - 1))
        out.append(KEY[:k] + bytes([wrong]) + tail)
    return out

"""Byte <-> bit-sequence encoding and chunking."""

from __future__ import annotations

import numpy as np

SEGMENT_BYTES = 10_000
CHUNK_SIZES = (64, 128)


def bytes_to_bits(x: bytes) -> np.ndarray:
    """MSB-first bit vector of length ``8 * len(x)`` (uint8 zeros/ones)."""
    return np.unpackbits(np.frombuffer(bytes(x), dtype=np.uint8))


def diff_bits(x: bytes, x2: bytes) -> np.ndarray:
    if len(x) != len(x2):
        raise ValueError("diff requires equal lengths")
    a = np.frombuffer(bytes(x), dtype=np.uint8)
    b = np.frombuffer(bytes(x2), dtype=np.uint8)
    return np.unpackbits(a ^ b)


def n_chunks(n_bits: int, chunk_bits: int) -> int:
    return -(-n_bits // chunk_bits)


def chunk_and_pad(bits, chunk_bits: int) -> tuple[np.ndarray, int]:
    """Zero-pad to a multiple of ``chunk_bits``; return (chunks, valid bits)."""
    if chunk_bits not in CHUNK_SIZES:
        raise ValueError(f"chunk_bits must be one of {CHUNK_SIZES}")
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    valid = bits.size
    T = n_chunks(valid, chunk_bits)
    out = np.zeros(T * chunk_bits, dtype=np.uint8)
    out[:valid] = bits
    return out.reshape(T, chunk_bits), valid


def segments(x: bytes, size: int = SEGMENT_BYTES) -> list[bytes]:
    """Consecutive ``size``-byte pieces; the last one may be shorter."""
    return [x[i:i + size] for i in range(0, len(x), size)]

"""Edge coverage maps, hit-count bucketing and the virgin map.

Coverage follows the AFL convention: an edge between two basic blocks
increments a counter at ``cur ^ (prev >> 1)`` and raw counts are later
folded into one of eight single-bit buckets.  Maps are logically
``MAP_SIZE`` bytes long but are stored sparsely, since the toy targets
touch at most a few hundred entries per execution.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Iterable, Mapping

import numpy as np

MAP_SIZE = 1 << 16

# (lower bound of raw count, bucket bit)
_BUCKETS = ((128, 0x80), (32, 0x40), (16, 0x20), (8, 0x10), (4, 0x08), (3, 0x04), (2, 0x02), (1, 0x01))

POPCOUNT = bytes(bin(i).count("1") for i in range(256))


def _bucket(count: int) -> int:
    for lo, bit in _BUCKETS:
        if count >= lo:
            return bit
    return 0


# raw counts saturate at 255 in an 8-bit counter, so a 256-entry table is exact
BUCKET_LUT = bytes(_bucket(c) for c in range(256))
_BUCKET_LUT_NP = np.frombuffer(BUCKET_LUT, dtype=np.uint8)


def bucket_of(count: int) -> int:
    return BUCKET_LUT[count] if count < 256 else 0x80


def record_edge(counters, prev_block: int, cur_block: int) -> None:
    """Increment the raw counter for the edge ``prev_block -> cur_block``.

    ``counters`` may be a dense array of ``MAP_SIZE`` counters or a dict
    used as a sparse accumulator.
    """
    idx = (cur_block ^ (prev_block >> 1)) % MAP_SIZE
    if isinstance(counters, dict):
        counters[idx] = counters.get(idx, 0) + 1
    else:
        counters[idx] += 1


class EdgeTracer:
    """Per-execution accumulator used by the instrumented targets."""

    __slots__ = ("counts", "prev", "steps")

    def __init__(self):
        self.counts: dict[int, int] = {}
        self.prev = 0
        self.steps = 0

    def hit(self, block: int) -> None:
        idx = block ^ (self.prev >> 1)
        counts = self.counts
        counts[idx] = counts.get(idx, 0) + 1
        self.prev = block

    def coverage(self) -> "CoverageMap":
        return CoverageMap.from_counts(self.counts)


class CoverageMap:
    """Classified coverage: one bucket bitmap byte per edge index.

    Instances are immutable.  Only non-zero entries are stored; ``entries``
    materialises the full ``MAP_SIZE`` view.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, items: Mapping[int, int] | None = None):
        cleaned = {}
        for idx, val in (items or {}).items():
            if not 0 <= idx < MAP_SIZE:
                raise IndexError(f"edge index {idx} outside map")
            if val & 0xFF:
                cleaned[idx] = val & 0xFF
        self._items = cleaned
        self._hash = None

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "CoverageMap":
        m = cls.__new__(cls)
        m._items = {i: (BUCKET_LUT[c] if c < 256 else 0x80) for i, c in counts.items() if c}
        m._hash = None
        return m

    @classmethod
    def from_array(cls, entries) -> "CoverageMap":
        arr = np.asarray(entries, dtype=np.uint8)
        if arr.shape != (MAP_SIZE,):
            raise ValueError(f"expected {MAP_SIZE} entries, got {arr.shape}")
        nz = np.flatnonzero(arr)
        return cls(dict(zip(nz.tolist(), arr[nz].tolist())))

    @property
    def entries(self) -> np.ndarray:
        out = np.zeros(MAP_SIZE, dtype=np.uint8)
        if self._items:
            idx = np.fromiter(self._items.keys(), dtype=np.int64, count=len(self._items))
            out[idx] = np.fromiter(self._items.values(), dtype=np.uint8, count=len(self._items))
        return out

    def items(self):
        return self._items.items()

    def get(self, idx: int) -> int:
        return self._items.get(idx, 0)

    def __len__(self) -> int:
        return MAP_SIZE

    def nonzero_count(self) -> int:
        return len(self._items)

    def popcount(self) -> int:
        return sum(POPCOUNT[v] for v in self._items.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, CoverageMap) and self._items == other._items

    def __hash__(self) -> int:
        return hash(path_hash(self))

    def __repr__(self) -> str:
        return f"CoverageMap({len(self._items)} edges)"


def classify_counts(raw) -> CoverageMap:
    """Bucket a dense vector of ``MAP_SIZE`` raw hit counters."""
    arr = np.asarray(raw)
    if arr.shape != (MAP_SIZE,):
        raise ValueError(f"expected {MAP_SIZE} raw counters, got {arr.shape}")
    sat = np.minimum(arr, 255).astype(np.uint8)
    return CoverageMap.from_array(_BUCKET_LUT_NP[sat])


class VirginMap:
    """Bits never yet observed; starts all-ones and only ever loses bits."""

    __slots__ = ("bits", "cleared")

    def __init__(self):
        self.bits = bytearray(b"\xff" * MAP_SIZE)
        self.cleared = 0

    def popcount(self) -> int:
        return 8 * MAP_SIZE - self.cleared

    def copy(self) -> "VirginMap":
        v = VirginMap.__new__(VirginMap)
        v.bits = bytearray(self.bits)
        v.cleared = self.cleared
        return v


def has_input_gain(virgin: VirginMap, cmap: CoverageMap, commit: bool = True) -> bool:
    """True iff ``cmap`` sets any bit still virgin.  Clears those bits when
    ``commit`` is set."""
    bits = virgin.bits
    gain = False
    for idx, val in cmap._items.items():
        new = bits[idx] & val
        if new:
            gain = True
            if not commit:
                break
            bits[idx] ^= new
            virgin.cleared += POPCOUNT[new]
    return gain


def new_virgin_bits(virgin: VirginMap, cmap: CoverageMap) -> list[tuple[int, int]]:
    """(index, bits) pairs ``cmap`` would clear, without mutating ``virgin``."""
    bits = virgin.bits
    return [(idx, bits[idx] & val) for idx, val in cmap._items.items() if bits[idx] & val]


def strictly_less_score(b: CoverageMap, b2: CoverageMap) -> int:
    """Number of bit positions that are 0 in ``b`` and 1 in ``b2``."""
    base = b._items
    return sum(POPCOUNT[v & ~base.get(i, 0) & 0xFF] for i, v in b2._items.items())


def path_hash(cmap: CoverageMap) -> int:
    if cmap._hash is None:
        h = hashlib.blake2b(digest_size=8)
        h.update(b"".join(struct.pack("<HB", i, v) for i, v in sorted(cmap._items.items())))
        cmap._hash = int.from_bytes(h.digest(), "little")
    return cmap._hash


def union(maps: Iterable[CoverageMap]) -> CoverageMap:
    acc: dict[int, int] = {}
    for m in maps:
        for i, v in m.items():
            acc[i] = acc.get(i, 0) | v
    return CoverageMap(acc)

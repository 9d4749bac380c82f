"""Training samples, the ``NFZD`` sample file and the binned dataset."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .encoding import SEGMENT_BYTES, chunk_and_pad, diff_bits, n_chunks

SAMPLES_MAGIC = b"NFZD"
SAMPLES_VERSION = 1


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    x: bytes
    x2: bytes
    score: int

    def __post_init__(self):
        if len(self.x) != len(self.x2):
            raise ValueError("sample inputs must have equal length")
        if self.score < 0:
            raise ValueError("score must be non-negative")


class SampleWriter:
    """Streams records to an ``NFZD`` file."""

    def __init__(self, fh: BinaryIO):
        self.fh = fh
        self.count = 0
        fh.write(SAMPLES_MAGIC + struct.pack("<H", SAMPLES_VERSION))

    def write(self, rec: SampleRecord) -> None:
        self.fh.write(struct.pack("<I", len(rec.x)) + rec.x + rec.x2 + struct.pack("<I", rec.score))
        self.count += 1


def write_samples(path: str | Path, records: Iterable[SampleRecord]) -> int:
    with open(path, "wb") as fh:
        w = SampleWriter(fh)
        for rec in records:
            w.write(rec)
        return w.count


def iter_samples(path: str | Path) -> Iterator[SampleRecord]:
    with open(path, "rb") as fh:
        head = fh.read(6)
        if len(head) < 6 or head[:4] != SAMPLES_MAGIC:
            raise FormatError(f"{path}: not a sample file")
        (version,) = struct.unpack("<H", head[4:])
        if version != SAMPLES_VERSION:
            raise FormatError(f"{path}: unsupported sample file version {version}")
        while True:
            raw = fh.read(4)
            if not raw:
                return
            if len(raw) < 4:
                raise FormatError(f"{path}: truncated record header")
            (n,) = struct.unpack("<I", raw)
            body = fh.read(2 * n + 4)
            if len(body) < 2 * n + 4:
                raise FormatError(f"{path}: truncated record")
            yield SampleRecord(body[:n], body[n:2 * n], struct.unpack("<I", body[2 * n:])[0])


def read_samples(path: str | Path) -> list[SampleRecord]:
    return list(iter_samples(path))


@dataclass
class TrainingExample:
    x: bytes
    y: np.ndarray  # uint8 bits, len 8*len(x)
    score: int

    def __post_init__(self):
        if len(self.y) != 8 * len(self.x):
            raise ValueError("y must hold 8 bits per byte of x")


@dataclass
class Dataset:
    chunk_bits: int
    bins: dict[int, list[TrainingExample]] = field(default_factory=dict)

    def add(self, ex: TrainingExample) -> None:
        self.bins.setdefault(n_chunks(8 * len(ex.x), self.chunk_bits), []).append(ex)

    def __len__(self) -> int:
        return sum(len(v) for v in self.bins.values())

    def examples(self) -> Iterator[TrainingExample]:
        for k in sorted(self.bins):
            yield from self.bins[k]

    def batch(self, bin_key: int, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(X, Y, valid) arrays for examples ``idx`` of one bin."""
        exs = [self.bins[bin_key][i] for i in idx]
        X = np.empty((len(exs), bin_key, self.chunk_bits), dtype=np.float32)
        Y = np.empty_like(X)
        valid = np.empty(len(exs), dtype=np.int64)
        for j, ex in enumerate(exs):
            xc, v = chunk_and_pad(np.unpackbits(np.frombuffer(ex.x, dtype=np.uint8)), self.chunk_bits)
            yc, _ = chunk_and_pad(ex.y, self.chunk_bits)
            X[j], Y[j], valid[j] = xc, yc, v
        return X, Y, valid


def build_dataset(records: Iterable[SampleRecord], gamma: int = 0, chunk_bits: int = 64,
                  segment: int = SEGMENT_BYTES) -> Dataset:
    """Keep records scoring strictly above ``gamma``, label them with the bit
    diff, split long inputs into ``segment``-byte pieces and bin by padded
    chunk count."""
    ds = Dataset(chunk_bits)
    for rec in records:
        if rec.score <= gamma:
            continue
        y = diff_bits(rec.x, rec.x2)
        for start in range(0, len(rec.x), segment):
            piece = rec.x[start:start + segment]
            ds.add(TrainingExample(piece, y[8 * start:8 * (start + len(piece))], rec.score))
    return ds

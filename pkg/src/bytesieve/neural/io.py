"""``NFZM`` model files.

Layout (little-endian)::

    "NFZM" | u16 version | u8 arch | u8 layers | u16 chunk_bits
    u8 n_cells | n_cells x u16 hidden
    per cell, per tensor (W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o):
        u32 n_floats | n_floats x f32   (row-major)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import FormatError
from .model import ARCHS, ModelBundle, ModelConfig

MODEL_MAGIC = b"NFZM"
MODEL_VERSION = 1


def dumps(bundle: ModelBundle) -> bytes:
    cfg = bundle.config
    parts = [MODEL_MAGIC, struct.pack("<HBBH", MODEL_VERSION, ARCHS.index(cfg.arch), cfg.layers, cfg.chunk_bits)]
    parts.append(struct.pack("<B", len(bundle.cells)))
    parts.extend(struct.pack("<H", c.hidden) for c in bundle.cells)
    for c in bundle.cells:
        for t in c.tensors():
            arr = np.ascontiguousarray(t, dtype="<f4")
            parts.append(struct.pack("<I", arr.size))
            parts.append(arr.tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> ModelBundle:
    if blob[:4] != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)")
    try:
        version, arch_id, layers, chunk_bits = struct.unpack_from("<HBBH", blob, 4)
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model version {version}")
        if arch_id >= len(ARCHS):
            raise FormatError(f"unknown architecture id {arch_id}")
        try:
            cfg = ModelConfig(ARCHS[arch_id], layers, chunk_bits)
        except ValueError as e:
            raise FormatError(str(e)) from None
        pos = 10
        (n_cells,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        hidden = struct.unpack_from(f"<{n_cells}H", blob, pos)
        pos += 2 * n_cells
        shapes = cfg.cell_shapes()
        if tuple(h for _, h in shapes) != hidden:
            raise FormatError(f"hidden sizes {hidden} inconsistent with {cfg}")
        bundle = ModelBundle.zeros(cfg)
        for c in bundle.cells:
            for view in c.tensors():
                (n,) = struct.unpack_from("<I", blob, pos)
                pos += 4
                if n != view.size:
                    raise FormatError(f"tensor holds {n} floats, expected {view.size}")
                if pos + 4 * n > len(blob):
                    raise FormatError("truncated model file")
                view[...] = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(view.shape)
                pos += 4 * n
    except struct.error:
        raise FormatError("truncated model file") from None
    if pos != len(blob):
        raise FormatError("trailing bytes after model tensors")
    return bundle


def save_model(bundle: ModelBundle, path: str | Path) -> None:
    Path(path).write_bytes(dumps(bundle))


def load_model(path: str | Path) -> ModelBundle:
    return loads(Path(path).read_bytes())


def stored_float_count(blob: bytes) -> int:
    """Number of parameter floats in a serialized model (header excluded)."""
    (n_cells,) = struct.unpack_from("<B", blob, 10)
    pos = 11 + 2 * n_cells
    total = 0
    while pos < len(blob):
        (n,) = struct.unpack_from("<I", blob, pos)
        total += n
        pos += 4 + 4 * n
    return total

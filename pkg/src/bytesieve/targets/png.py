"""A miniature PNG-like chunk parser (stand-in for readpng).

After the 8-byte signature the file is a run of chunks::

    u32be length | 4-byte type | payload | u32be checksum

The checksum is the byte sum of the payload mod 2**32 rather than CRC32,
so it can be forged by a handful of arithmetic mutations.
"""

from __future__ import annotations

import random
import struct

from .base import CrashSignal, TargetProgram, Tracer, blocks

SIGNATURE = b"\x89PNG\r\n\x1a\n"

SITE_TEXT_OVERREAD = 1

B = blocks(
    "png",
    "entry signature chunk_hdr_trunc ihdr idat text iend unknown chunk_trunc crc_missing crc_ok crc_bad "
    "ihdr_badlen ihdr_zero ihdr_ok interlace idat_early text_kw text_nokw iend_ok",
)
TYPE_BLOCK = {b"IHDR": B["ihdr"], b"IDAT": B["idat"], b"tEXt": B["text"], b"IEND": B["iend"]}
DEPTH_BLOCK = {d: B["ihdr_ok"] ^ (d << 8) for d in (1, 2, 4, 8, 16)}
DEPTH_BAD = B["ihdr_ok"] ^ (0x1F << 8)
COLOR_BLOCK = {c: B["ihdr_ok"] ^ ((0x20 + c) << 8) for c in (0, 2, 3, 4, 6)}
COLOR_BAD = B["ihdr_ok"] ^ (0x2F << 8)
FILTER_BLOCK = [B["idat"] ^ ((0x40 + f) << 8) for f in range(6)]  # 5 filters + invalid
KEYWORD_BLOCK = {k: B["text_kw"] ^ ((0x60 + i) << 8) for i, k in enumerate((b"Title", b"Author", b"Comment", b"Software"))}

ROW = 16


def checksum(payload: bytes) -> int:
    return sum(payload) & 0xFFFFFFFF


class MiniPng(TargetProgram):
    name = "mini_png"

    def _parse(self, data: bytes, t: Tracer) -> None:
        hit = t.hit
        hit(B["entry"])
        if data[:8] != SIGNATURE:
            return
        hit(B["signature"])
        pos, end = 8, len(data)
        seen_ihdr = False
        while pos < end:
            t.tick()
            if end - pos < 8:
                hit(B["chunk_hdr_trunc"])
                return
            length = struct.unpack_from(">I", data, pos)[0]
            ctype = data[pos + 4:pos + 8]
            pos += 8
            hit(TYPE_BLOCK.get(ctype, B["unknown"]))
            if length > end - pos:
                if ctype == b"tEXt":
                    # keyword scan trusts the declared length
                    raise CrashSignal(SITE_TEXT_OVERREAD)
                hit(B["chunk_trunc"])
                return
            payload = data[pos:pos + length]
            pos += length
            if end - pos < 4:
                hit(B["crc_missing"])
                return
            stored = struct.unpack_from(">I", data, pos)[0]
            pos += 4
            t.tick(length)
            if stored != checksum(payload):
                hit(B["crc_bad"])
                continue
            hit(B["crc_ok"])
            if ctype == b"IHDR":
                seen_ihdr = self._ihdr(payload, t)
            elif ctype == b"IDAT":
                self._idat(payload, seen_ihdr, t)
            elif ctype == b"tEXt":
                self._text(payload, t)
            elif ctype == b"IEND":
                hit(B["iend_ok"])
                return

    @staticmethod
    def _ihdr(p: bytes, t: Tracer) -> bool:
        if len(p) != 13:
            t.hit(B["ihdr_badlen"])
            return False
        width, height = struct.unpack_from(">II", p)
        if width == 0 or height == 0:
            t.hit(B["ihdr_zero"])
            return False
        t.hit(DEPTH_BLOCK.get(p[8], DEPTH_BAD))
        t.hit(COLOR_BLOCK.get(p[9], COLOR_BAD))
        if p[12]:
            t.hit(B["interlace"])
        return True

    @staticmethod
    def _idat(p: bytes, seen_ihdr: bool, t: Tracer) -> None:
        if not seen_ihdr:
            t.hit(B["idat_early"])
            return
        for r in range(0, len(p), ROW):
            t.hit(FILTER_BLOCK[min(p[r], 5)])

    @staticmethod
    def _text(p: bytes, t: Tracer) -> None:
        nul = p.find(b"\x00")
        if nul <= 0:
            t.hit(B["text_nokw"])
            return
        t.hit(KEYWORD_BLOCK.get(p[:nul], B["text_kw"]))

    def seeds(self) -> list[bytes]:
        rng = random.Random(0x9E6)
        out = []
        for _ in range(10):
            w, h = rng.randint(1, 64), rng.randint(1, 64)
            ihdr = struct.pack(">IIBBBBB", w, h, rng.choice((1, 8, 8)), rng.choice((0, 2, 6)), 0, 0, 0)
            chunks = [(b"IHDR", ihdr)]
            for _ in range(rng.randint(1, 2)):
                rows = rng.randint(1, 4)
                idat = b"".join(bytes([rng.choice((0, 0, 1))]) + bytes(rng.randrange(256) for _ in range(ROW - 1)) for _ in range(rows))
                chunks.append((b"IDAT", idat))
            chunks.append((b"IEND", b""))
            out.append(build(chunks))
        return out

    def crash_witnesses(self) -> dict[int, bytes]:
        return {SITE_TEXT_OVERREAD: SIGNATURE + struct.pack(">I", 0xFFFF) + b"tEXt" + b"abc"}


def chunk(ctype: bytes, payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + ctype + payload + struct.pack(">I", checksum(payload))


def build(chunks: list[tuple[bytes, bytes]]) -> bytes:
    return SIGNATURE + b"".join(chunk(c, p) for c, p in chunks)

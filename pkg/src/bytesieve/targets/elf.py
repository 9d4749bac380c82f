"""A miniature ELF-like container parser (stand-in for readelf).

Layout::

    0   magic  7F 'E' 'L' 'F'
    4   class  (1 or 2)
    5   u16le  section count n
    7   n x {u32le type, u32le length}
    ..  section bodies, back to back, in table order

Section types: 1 strtab, 2 symtab, 3 note (opaque payload), 4 dynamic.
"""

from __future__ import annotations

import random
import struct

from .base import CrashSignal, TargetProgram, Tracer, blocks

MAGIC = b"\x7fELF"

SITE_SECTION_OVERREAD = 1
SITE_ALLOC_OVERFLOW = 2

B = blocks(
    "elf",
    "entry magic class1 class2 class_bad hdr_trunc hdr_ok no_sections table_trunc "
    "record strtab symtab note dynamic unknown sec_trunc "
    "str_entry str_unterminated sym_misaligned sym_local sym_global sym_weak sym_other "
    "dyn_null dyn_needed dyn_strtab dyn_other dyn_misaligned done",
)
SECTION_BLOCK = {1: B["strtab"], 2: B["symtab"], 3: B["note"], 4: B["dynamic"]}
SYM_BIND = {0: B["sym_local"], 1: B["sym_global"], 2: B["sym_weak"]}
DYN_TAG = {0: B["dyn_null"], 1: B["dyn_needed"], 5: B["dyn_strtab"]}


class MiniElf(TargetProgram):
    name = "mini_elf"

    def _parse(self, data: bytes, t: Tracer) -> None:
        hit = t.hit
        hit(B["entry"])
        if data[:4] != MAGIC:
            return
        hit(B["magic"])
        if len(data) < 5:
            hit(B["hdr_trunc"])
            return
        cls = data[4]
        if cls == 1:
            hit(B["class1"])
        elif cls == 2:
            hit(B["class2"])
        else:
            hit(B["class_bad"])
            return
        if len(data) < 7:
            hit(B["hdr_trunc"])
            return
        n = data[5] | (data[6] << 8)
        hit(B["hdr_ok"])
        if n == 0:
            hit(B["no_sections"])
            return
        if n > 1024 and cls == 2:
            # section table sized with a 16-bit multiply that wraps
            raise CrashSignal(SITE_ALLOC_OVERFLOW)
        offset = 7 + 8 * n
        if offset > len(data):
            hit(B["table_trunc"])
            return
        for j in range(n):
            t.tick()
            stype, length = struct.unpack_from("<II", data, 7 + 8 * j)
            hit(B["record"])
            hit(SECTION_BLOCK.get(stype, B["unknown"]))
            if offset + length > len(data):
                if stype == 4:
                    # dynamic section body read without a bounds check
                    raise CrashSignal(SITE_SECTION_OVERREAD)
                hit(B["sec_trunc"])
                return
            body = data[offset:offset + length]
            offset += length
            if stype == 1:
                self._strtab(body, t)
            elif stype == 2:
                self._symtab(body, t)
            elif stype == 4:
                self._dynamic(body, t)
        hit(B["done"])

    @staticmethod
    def _strtab(body: bytes, t: Tracer) -> None:
        t.tick(len(body))
        for _ in range(body.count(0)):
            t.hit(B["str_entry"])
        if body and body[-1] != 0:
            t.hit(B["str_unterminated"])

    @staticmethod
    def _symtab(body: bytes, t: Tracer) -> None:
        if len(body) % 4:
            t.hit(B["sym_misaligned"])
            return
        for k in range(0, len(body), 4):
            t.tick()
            t.hit(SYM_BIND.get(body[k] >> 4, B["sym_other"]))

    @staticmethod
    def _dynamic(body: bytes, t: Tracer) -> None:
        if len(body) % 8:
            t.hit(B["dyn_misaligned"])
            return
        for k in range(0, len(body), 8):
            t.tick()
            tag = struct.unpack_from("<I", body, k)[0]
            t.hit(DYN_TAG.get(tag, B["dyn_other"]))
            if tag == 0:
                break

    def seeds(self) -> list[bytes]:
        rng = random.Random(0xE1F)
        out = []
        for _ in range(10):
            sections = []
            for _ in range(rng.randint(1, 3)):
                kind = rng.choice((1, 2, 3, 3))
                if kind == 1:
                    names = [bytes(rng.choice(b"abcdefghij_") for _ in range(rng.randint(2, 6))) for _ in range(rng.randint(1, 3))]
                    body = b"".join(nm + b"\x00" for nm in names)
                elif kind == 2:
                    body = bytes(b for _ in range(rng.randint(1, 3)) for b in (rng.choice((0x00, 0x10, 0x20)), rng.randrange(256), rng.randrange(256), rng.randrange(256)))
                else:
                    body = bytes(rng.randrange(256) for _ in range(rng.randint(16, 40)))
                sections.append((kind, body))
            out.append(build(1, sections))
        return out

    def crash_witnesses(self) -> dict[int, bytes]:
        overread = MAGIC + bytes([1]) + struct.pack("<H", 1) + struct.pack("<II", 4, 0x1000)
        alloc = MAGIC + bytes([2]) + struct.pack("<H", 2000)
        return {SITE_SECTION_OVERREAD: overread, SITE_ALLOC_OVERFLOW: alloc}


def build(cls: int, sections: list[tuple[int, bytes]]) -> bytes:
    """Serialise a well-formed file."""
    table = b"".join(struct.pack("<II", k, len(body)) for k, body in sections)
    return MAGIC + bytes([cls]) + struct.pack("<H", len(sections)) + table + b"".join(body for _, body in sections)

"""AFL-style deterministic and havoc mutators.

Every proposal carries the set of byte positions it touched, expressed in
the coordinates of the seed it was derived from, so that a byte mask over
the seed can accept or veto it without diffing.

Bit numbering is MSB-first: bit 0 of a byte is its 0x80 bit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

MAX_INPUT_LEN = 1 << 20
ARITH_MAX = 35
HAVOC_MIN_STACK = 2
HAVOC_MAX_STACK = 128

INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)
INTERESTING_16 = INTERESTING_8 + (-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767)
INTERESTING_32 = INTERESTING_16 + (-2147483648, -100663046, -32769, 32768, 65535, 65536, 100663045, 2147483647)

_INTERESTING = {1: INTERESTING_8, 2: INTERESTING_16, 4: INTERESTING_32}


def interesting_values(width: int) -> list[int]:
    if width not in _INTERESTING:
        raise ValueError(f"width must be 1, 2 or 4, not {width}")
    return list(_INTERESTING[width])


@dataclass(frozen=True, slots=True)
class MutationProposal:
    data: bytes
    touched: tuple[int, ...]
    length_changed: bool
    op_trace: tuple[str, ...]


def _pack(value: int, width: int, big: bool) -> bytes:
    return (value & ((1 << (8 * width)) - 1)).to_bytes(width, "big" if big else "little")


def load_dictionary(path: str | Path) -> list[bytes]:
    """One token per line; ``\\xNN`` escapes allowed, blank lines and ``#``
    comments skipped."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.encode("latin-1").decode("unicode_escape").encode("latin-1")
        if tok:
            tokens.append(tok)
    return tokens


def deterministic_stage(seed: bytes, dictionary: Sequence[bytes] = ()) -> Iterator[MutationProposal]:
    """Walk every localized mutation of ``seed`` in a fixed order.

    Order: bit flips (1/2/4 bits), byte flips (1/2/4 bytes), little-endian
    arithmetic +-1..35 (1/2/4 bytes), interesting values (1 byte, then 2
    and 4 bytes in both endiannesses), dictionary tokens.  Arithmetic,
    interesting and dictionary proposals that leave the seed unchanged are
    skipped; flips never do.
    """
    if not seed:
        raise ValueError("seed must be non-empty")
    L = len(seed)
    nbits = 8 * L

    for width, tag in ((1, "flip1"), (2, "flip2"), (4, "flip4")):
        for b in range(nbits - width + 1):
            buf = bytearray(seed)
            for k in range(b, b + width):
                buf[k >> 3] ^= 0x80 >> (k & 7)
            lo, hi = b >> 3, (b + width - 1) >> 3
            yield MutationProposal(bytes(buf), tuple(range(lo, hi + 1)), False, (tag,))

    for width, tag in ((1, "byteflip1"), (2, "byteflip2"), (4, "byteflip4")):
        for i in range(L - width + 1):
            buf = bytearray(seed)
            for k in range(i, i + width):
                buf[k] ^= 0xFF
            yield MutationProposal(bytes(buf), tuple(range(i, i + width)), False, (tag,))

    for width, tag in ((1, "arith8"), (2, "arith16"), (4, "arith32")):
        mod = 1 << (8 * width)
        span_cache = {}
        for i in range(L - width + 1):
            cur = int.from_bytes(seed[i:i + width], "little")
            span = span_cache.setdefault(i, tuple(range(i, i + width)))
            for v in range(1, ARITH_MAX + 1):
                for new in ((cur + v) % mod, (cur - v) % mod):
                    if new == cur:
                        continue
                    buf = bytearray(seed)
                    buf[i:i + width] = new.to_bytes(width, "little")
                    yield MutationProposal(bytes(buf), span, False, (tag,))

    for width, tag in ((1, "interest8"), (2, "interest16"), (4, "interest32")):
        endians = (False,) if width == 1 else (False, True)
        for i in range(L - width + 1):
            span = tuple(range(i, i + width))
            old = seed[i:i + width]
            for val in _INTERESTING[width]:
                for big in endians:
                    enc = _pack(val, width, big)
                    if enc == old:
                        continue
                    yield MutationProposal(seed[:i] + enc + seed[i + width:], span, False, (tag,))

    for tok in dictionary:
        n = len(tok)
        for i in range(L - n + 1):
            if seed[i:i + n] == tok:
                continue
            yield MutationProposal(seed[:i] + tok + seed[i + n:], tuple(range(i, i + n)), False, ("dict",))


def deterministic_count(seed: bytes, dictionary: Sequence[bytes] = ()) -> int:
    return sum(1 for _ in deterministic_stage(seed, dictionary))


# havoc operator ids
FLIP1, FLIP2, FLIP4, BFLIP1, BFLIP2, BFLIP4, ARITH8, ARITH16, ARITH32, INT8, INT16, INT32, \
    RANDBYTE, DELETE, CLONE, OVERWRITE, DICT = range(17)
OP_NAMES = ("flip1", "flip2", "flip4", "byteflip1", "byteflip2", "byteflip4", "arith8", "arith16", "arith32",
            "interest8", "interest16", "interest32", "randbyte", "delete", "clone", "overwrite", "dict")
_OP_BY_NAME = {n: i for i, n in enumerate(OP_NAMES)}
_WIDTH = {FLIP1: 1, FLIP2: 1, FLIP4: 1, BFLIP1: 1, BFLIP2: 2, BFLIP4: 4, ARITH8: 1, ARITH16: 2, ARITH32: 4,
          INT8: 1, INT16: 2, INT32: 4, RANDBYTE: 1, DELETE: 2, CLONE: 1, OVERWRITE: 2, DICT: 1}


def _block_len(r, limit: int) -> int:
    """AFL-like block length: usually short, occasionally long."""
    roll = r()
    hi = 32 if roll < 0.7 else 128 if roll < 0.95 else 1500
    hi = min(hi, limit)
    return 1 + int(r() * hi) if hi > 1 else 1


class _Work:
    """Mutable buffer plus a map from current positions back to the seed."""

    __slots__ = ("buf", "org", "touched", "trace")

    def __init__(self, seed: bytes):
        self.buf = bytearray(seed)
        self.org: list[int] | None = None
        self.touched: set[int] = set()
        self.trace: list[str] = []

    def mark(self, start: int, stop: int) -> None:
        if self.org is None:
            self.touched.update(range(start, stop))
        else:
            self.touched.update(o for o in self.org[start:stop] if o >= 0)

    def unshare(self) -> list[int]:
        if self.org is None:
            self.org = list(range(len(self.buf)))
        return self.org

    def proposal(self, seed_len: int) -> MutationProposal:
        changed = self.org is not None
        if not self.touched:  # only reachable when every touched byte was itself inserted
            self.touched.add(0)
        return MutationProposal(bytes(self.buf), tuple(sorted(self.touched)), changed, tuple(self.trace))


def apply_op(w: _Work, op: int, args: tuple, dictionary: Sequence[bytes] = ()) -> None:
    """Apply one havoc operator with explicit arguments.

    Argument shapes: flips ``(bit_offset,)``; byte flips ``(pos,)``;
    arithmetic ``(pos, delta)``; interesting ``(pos, value, big_endian)``;
    randbyte ``(pos, value)``; delete ``(start, length)``; clone
    ``(src, length, dst)`` or ``(None, length, dst, fill)``; overwrite
    ``(src, length, dst)`` or ``(None, length, dst, fill)``; dict
    ``(token_index, pos)``.
    """
    buf = w.buf
    if op <= FLIP4:
        width = (1, 2, 4)[op]
        b = args[0]
        for k in range(b, b + width):
            buf[k >> 3] ^= 0x80 >> (k & 7)
        w.mark(b >> 3, ((b + width - 1) >> 3) + 1)
    elif op <= BFLIP4:
        width = (1, 2, 4)[op - BFLIP1]
        i = args[0]
        for k in range(i, i + width):
            buf[k] ^= 0xFF
        w.mark(i, i + width)
    elif op <= ARITH32:
        width = (1, 2, 4)[op - ARITH8]
        i, delta = args
        cur = int.from_bytes(buf[i:i + width], "little")
        buf[i:i + width] = ((cur + delta) % (1 << (8 * width))).to_bytes(width, "little")
        w.mark(i, i + width)
    elif op <= INT32:
        width = (1, 2, 4)[op - INT8]
        i, val, big = args
        buf[i:i + width] = _pack(val, width, big)
        w.mark(i, i + width)
    elif op == RANDBYTE:
        i, val = args
        buf[i] = val
        w.mark(i, i + 1)
    elif op == DELETE:
        start, n = args
        w.mark(start, start + n)
        org = w.unshare()
        del buf[start:start + n]
        del org[start:start + n]
    elif op == CLONE:
        src, n, dst = args[:3]
        if src is None:
            block = bytes([args[3]]) * n
        else:
            block = bytes(buf[src:src + n])
            w.mark(src, src + n)
        anchor = dst if dst < len(buf) else len(buf) - 1
        w.mark(anchor, anchor + 1)
        org = w.unshare()
        buf[dst:dst] = block
        org[dst:dst] = [-1] * n
    elif op == OVERWRITE:
        src, n, dst = args[:3]
        if src is None:
            buf[dst:dst + n] = bytes([args[3]]) * n
        else:
            w.mark(src, src + n)
            buf[dst:dst + n] = buf[src:src + n]
        w.mark(dst, dst + n)
    elif op == DICT:
        tok = dictionary[args[0]]
        i = args[1]
        buf[i:i + len(tok)] = tok
        w.mark(i, i + len(tok))
    else:
        raise ValueError(f"unknown operator {op}")
    w.trace.append(OP_NAMES[op])


def apply_ops(seed: bytes, ops: Sequence[tuple], dictionary: Sequence[bytes] = ()) -> MutationProposal:
    """Apply an explicit operator sequence, e.g. ``[("delete", 2, 3)]``."""
    w = _Work(seed)
    for name, *args in ops:
        apply_op(w, _OP_BY_NAME[name], tuple(args), dictionary)
    return w.proposal(len(seed))


def havoc_mutation(seed: bytes, rng: random.Random, dictionary: Sequence[bytes] = (),
                   max_len: int = MAX_INPUT_LEN, record: list | None = None) -> MutationProposal:
    """Stack 2..128 (uniform) randomly chosen operators on ``seed``.

    Operators that cannot apply to the current buffer are redrawn.  When
    ``record`` is a list, each applied operator is appended to it in the
    ``apply_ops`` format.
    """
    if not seed:
        raise ValueError("seed must be non-empty")
    r = rng.random
    L0 = len(seed)
    buf = bytearray(seed)
    tm = bytearray(L0)  # touched marks, seed coordinates
    org = None  # current position -> seed position (-1 for inserted bytes)
    trace = []
    n_ops = len(OP_NAMES) if dictionary else DICT
    stack = HAVOC_MIN_STACK + int(r() * (HAVOC_MAX_STACK - HAVOC_MIN_STACK + 1))
    done = 0
    while done < stack:
        op = int(r() * n_ops)
        L = len(buf)
        if op <= FLIP4:
            width = (1, 2, 4)[op]
            if 8 * L < width:
                continue
            b = int(r() * (8 * L - width + 1))
            for k in range(b, b + width):
                buf[k >> 3] ^= 0x80 >> (k & 7)
            lo, hi = b >> 3, ((b + width - 1) >> 3) + 1
            args = (b,)
        elif op <= INT32:
            width = _WIDTH[op]
            if L < width:
                continue
            lo = int(r() * (L - width + 1))
            hi = lo + width
            if op <= BFLIP4:
                for k in range(lo, hi):
                    buf[k] ^= 0xFF
                args = (lo,)
            elif op <= ARITH32:
                delta = 1 + int(r() * ARITH_MAX)
                if r() < 0.5:
                    delta = -delta
                if width == 1:
                    buf[lo] = (buf[lo] + delta) & 0xFF
                else:
                    cur = int.from_bytes(buf[lo:hi], "little")
                    buf[lo:hi] = ((cur + delta) % (1 << (8 * width))).to_bytes(width, "little")
                args = (lo, delta)
            else:
                vals = _INTERESTING[width]
                val = vals[int(r() * len(vals))]
                big = width > 1 and r() < 0.5
                buf[lo:hi] = _pack(val, width, big)
                args = (lo, val, big)
        elif op == RANDBYTE:
            lo = int(r() * L)
            hi = lo + 1
            val = int(r() * 256)
            buf[lo] = val
            args = (lo, val)
        elif op == DELETE:
            if L < 2:
                continue
            n = _block_len(r, L - 1)
            lo = int(r() * (L - n + 1))
            hi = lo + n
            _mark(tm, org, lo, hi)
            if org is None:
                org = list(range(L))
            del buf[lo:hi]
            del org[lo:hi]
            args = (lo, n)
            lo = hi = 0
        elif op == CLONE:
            room = max_len - L
            if room <= 0:
                continue
            n = _block_len(r, min(L, room))
            dst = int(r() * (L + 1))
            if r() < 0.75:
                src = int(r() * (L - n + 1))
                block = bytes(buf[src:src + n])
                _mark(tm, org, src, src + n)
                args = (src, n, dst)
            else:
                fill = int(r() * 256)
                block = bytes((fill,)) * n
                args = (None, n, dst, fill)
            lo = dst if dst < L else L - 1
            _mark(tm, org, lo, lo + 1)
            if org is None:
                org = list(range(L))
            buf[dst:dst] = block
            org[dst:dst] = [-1] * n
            lo = hi = 0
        elif op == OVERWRITE:
            if L < 2:
                continue
            n = _block_len(r, L - 1)
            lo = int(r() * (L - n + 1))
            hi = lo + n
            if r() < 0.75:
                src = int(r() * (L - n + 1))
                _mark(tm, org, src, src + n)
                buf[lo:hi] = buf[src:src + n]
                args = (src, n, lo)
            else:
                fill = int(r() * 256)
                buf[lo:hi] = bytes((fill,)) * n
                args = (None, n, lo, fill)
        else:
            tok_i = int(r() * len(dictionary))
            tok = dictionary[tok_i]
            if len(tok) > L:
                continue
            lo = int(r() * (L - len(tok) + 1))
            hi = lo + len(tok)
            buf[lo:hi] = tok
            args = (tok_i, lo)
        if hi > lo:
            if org is None:
                if hi - lo == 1:
                    tm[lo] = 1
                else:
                    tm[lo:hi] = b"\x01" * (hi - lo)
            else:
                _mark(tm, org, lo, hi)
        trace.append(OP_NAMES[op])
        if record is not None:
            record.append((OP_NAMES[op],) + args)
        done += 1
    touched = tuple(i for i, v in enumerate(tm) if v) or (0,)
    return MutationProposal(bytes(buf), touched, org is not None, tuple(trace))


def _mark(tm: bytearray, org: list[int] | None, lo: int, hi: int) -> None:
    if org is None:
        tm[lo:hi] = b"\x01" * (hi - lo)
    else:
        for o in org[lo:hi]:
            if o >= 0:
                tm[o] = 1

"""A miniature XML tokenizer (stand-in for libxml)."""

from __future__ import annotations

import random

from .base import CrashSignal, TargetProgram, Tracer, blocks

MAX_DEPTH = 64
SITE_STACK_EXHAUSTION = 1

B = blocks(
    "xml",
    "entry open close match mismatch stray_close self_close attr attr_unquoted bad_name "
    "unterminated comment pi text ent_lt ent_gt ent_amp ent_quot ent_apos ent_num ent_bad nested",
)
ENTITY_BLOCK = {b"lt": B["ent_lt"], b"gt": B["ent_gt"], b"amp": B["ent_amp"], b"quot": B["ent_quot"], b"apos": B["ent_apos"]}
# one edge per power-of-two depth band, so nesting deeper is itself a gain
DEPTH_BLOCK = [B["nested"] ^ (k << 10) for k in range(8)]

_NAME = frozenset(b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_:-.")
_SPACE = frozenset(b" \t\r\n")


class MiniXml(TargetProgram):
    name = "mini_xml"

    def _parse(self, data: bytes, t: Tracer) -> None:
        hit = t.hit
        hit(B["entry"])
        stack: list[bytes] = []
        i, n = 0, len(data)
        while i < n:
            t.tick()
            c = data[i]
            if c == 0x3C:  # '<'
                i = self._tag(data, i + 1, stack, t)
                if i < 0:
                    return
            elif c == 0x26:  # '&'
                i = self._entity(data, i + 1, t)
            else:
                hit(B["text"])
                while i < n and data[i] not in (0x3C, 0x26):
                    i += 1
                t.tick()

    def _tag(self, data: bytes, i: int, stack: list[bytes], t: Tracer) -> int:
        n = len(data)
        if i < n and data[i] in (0x21, 0x3F):  # '!' or '?'
            end = data.find(b">", i)
            if end < 0:
                t.hit(B["unterminated"])
                return -1
            t.hit(B["comment"] if data[i] == 0x21 else B["pi"])
            return end + 1
        closing = i < n and data[i] == 0x2F
        if closing:
            i += 1
        start = i
        while i < n and data[i] in _NAME:
            i += 1
        name = data[start:i]
        if not name:
            t.hit(B["bad_name"])
            return i
        if closing:
            end = data.find(b">", i)
            if end < 0:
                t.hit(B["unterminated"])
                return -1
            t.hit(B["close"])
            if not stack:
                t.hit(B["stray_close"])
            elif stack[-1] == name:
                t.hit(B["match"])
                stack.pop()
            else:
                t.hit(B["mismatch"])
            return end + 1
        t.hit(B["open"])
        while True:
            t.tick()
            while i < n and data[i] in _SPACE:
                i += 1
            if i >= n:
                t.hit(B["unterminated"])
                return -1
            c = data[i]
            if c == 0x3E:  # '>'
                stack.append(name)
                depth = len(stack)
                if depth > MAX_DEPTH:
                    # recursive descent without a depth guard
                    raise CrashSignal(SITE_STACK_EXHAUSTION)
                if depth > 1:
                    t.hit(DEPTH_BLOCK[depth.bit_length() - 1])
                return i + 1
            if c == 0x2F and i + 1 < n and data[i + 1] == 0x3E:  # '/>'
                t.hit(B["self_close"])
                return i + 2
            i = self._attribute(data, i, t)
            if i < 0:
                return -1

    def _attribute(self, data: bytes, i: int, t: Tracer) -> int:
        n = len(data)
        start = i
        while i < n and data[i] in _NAME:
            i += 1
        if i == start:
            t.hit(B["bad_name"])
            return i + 1
        if i < n and data[i] == 0x3D:  # '='
            i += 1
        if i < n and data[i] in (0x22, 0x27):
            quote = data[i]
            end = data.find(bytes([quote]), i + 1)
            if end < 0:
                t.hit(B["unterminated"])
                return -1
            t.hit(B["attr"])
            value = data[i + 1:end]
            amp = value.find(b"&")
            while amp >= 0:
                self._entity(value, amp + 1, t)
                amp = value.find(b"&", amp + 1)
            return end + 1
        t.hit(B["attr_unquoted"])
        return i

    @staticmethod
    def _entity(data: bytes, i: int, t: Tracer) -> int:
        semi = data.find(b";", i, i + 9)
        if semi < 0:
            t.hit(B["ent_bad"])
            return i
        name = data[i:semi]
        if name[:1] == b"#" and name[1:].isdigit():
            t.hit(B["ent_num"])
        else:
            t.hit(ENTITY_BLOCK.get(name, B["ent_bad"]))
        return semi + 1

    def seeds(self) -> list[bytes]:
        rng = random.Random(0x3A1)
        words = [b"alpha", b"beta", b"gamma", b"delta", b"note", b"item"]
        out = []
        for _ in range(10):
            parts = []
            for _ in range(rng.randint(1, 3)):
                tag = rng.choice(words)
                attr = b' id="%d"' % rng.randint(0, 99) if rng.random() < 0.5 else b""
                text = rng.choice((b"hello", b"a &lt; b", b"x &amp; y", b"plain text here"))
                inner = b"<%s>%s</%s>" % (b"b", text, b"b") if rng.random() < 0.5 else text
                parts.append(b"<%s%s>%s</%s>" % (tag, attr, inner, tag))
            out.append(b"<doc>" + b"".join(parts) + b"</doc>")
        return out

    def crash_witnesses(self) -> dict[int, bytes]:
        return {SITE_STACK_EXHAUSTION: b"<a>" * (MAX_DEPTH + 1)}

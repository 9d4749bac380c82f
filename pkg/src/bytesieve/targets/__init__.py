"""Built-in instrumented targets."""

from .base import (
    DEFAULT_MAX_STEPS,
    HANG,
    NORMAL,
    Crash,
    ExecOutcome,
    ExecResult,
    TargetProgram,
)
from .elf import MiniElf
from .magic16 import Magic16
from .png import MiniPng
from .xml import MiniXml

TARGETS = {cls.name: cls for cls in (MiniElf, MiniPng, MiniXml, Magic16)}


def get_target(name: str, max_steps: int = DEFAULT_MAX_STEPS) -> TargetProgram:
    try:
        return TARGETS[name](max_steps=max_steps)
    except KeyError:
        raise ValueError(f"unknown target {name!r}; choose from {', '.join(sorted(TARGETS))}") from None


def mini_elf_execute(data: bytes):
    return MiniElf().execute(data)


def mini_png_execute(data: bytes):
    return MiniPng().execute(data)


def mini_xml_execute(data: bytes):
    return MiniXml().execute(data)


def magic16_execute(data: bytes):
    return Magic16().execute(data)


__all__ = [
    "TARGETS", "get_target", "TargetProgram", "ExecOutcome", "ExecResult", "Crash", "NORMAL", "HANG",
    "MiniElf", "MiniPng", "MiniXml", "Magic16",
    "mini_elf_execute", "mini_png_execute", "mini_xml_execute", "magic16_execute",
]

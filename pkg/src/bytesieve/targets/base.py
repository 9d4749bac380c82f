from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, NamedTuple

from ..coverage import CoverageMap, EdgeTracer, MAP_SIZE

DEFAULT_MAX_STEPS = 1_000_000


@dataclass(frozen=True)
class ExecOutcome:
    kind: str  # "normal" | "crash" | "hang"
    crash_site: int | None = None

    @property
    def is_crash(self) -> bool:
        return self.kind == "crash"

    def __str__(self) -> str:
        return f"crash({self.crash_site})" if self.is_crash else self.kind


NORMAL = ExecOutcome("normal")
HANG = ExecOutcome("hang")


def Crash(site: int) -> ExecOutcome:
    return ExecOutcome("crash", site)


class ExecResult(NamedTuple):
    outcome: ExecOutcome
    coverage: CoverageMap
    steps: int


class CrashSignal(Exception):
    def __init__(self, site: int):
        self.site = site


class HangSignal(Exception):
    pass


class Tracer(EdgeTracer):
    """Edge tracer with an interpreter step budget."""

    __slots__ = ("max_steps",)

    def __init__(self, max_steps: int):
        super().__init__()
        self.max_steps = max_steps

    def tick(self, n: int = 1) -> None:
        self.steps += n
        if self.steps > self.max_steps:
            raise HangSignal()


def block(name: str) -> int:
    """Stable basic-block id for a named instrumentation site."""
    return zlib.crc32(name.encode()) % MAP_SIZE


class TargetProgram:
    """A deterministic in-process parser with built-in edge instrumentation.

    Subclasses implement ``_parse(data, tracer)`` and raise ``CrashSignal``
    at planted bug sites.
    """

    name = "target"

    def __init__(self, max_steps: int = DEFAULT_MAX_STEPS):
        self.max_steps = max_steps

    def run(self, data: bytes) -> ExecResult:
        t = Tracer(self.max_steps)
        try:
            self._parse(data, t)
            outcome = NORMAL
        except CrashSignal as c:
            outcome = Crash(c.site)
        except HangSignal:
            outcome = HANG
        return ExecResult(outcome, t.coverage(), t.steps)

    def execute(self, data: bytes) -> tuple[ExecOutcome, CoverageMap]:
        r = self.run(data)
        return r.outcome, r.coverage

    __call__ = execute

    def _parse(self, data: bytes, t: Tracer) -> None:
        raise NotImplementedError

    def seeds(self) -> list[bytes]:
        raise NotImplementedError

    def crash_witnesses(self) -> dict[int, bytes]:
        return {}


def blocks(prefix: str, names: str) -> dict[str, int]:
    return {n: block(f"{prefix}.{n}") for n in names.split()}


Executor = Callable[[bytes], tuple[ExecOutcome, CoverageMap]]

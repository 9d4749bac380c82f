"""Campaign engine: queue, baseline/augmented fuzzing loop, crash and sample
collection.

Time is virtual by default: every proposal costs a fixed mutation overhead
and every execution a fixed overhead plus a per-interpreter-step cost.
That keeps ``stats.csv`` a pure function of the flags.  Model queries are
not charged, matching a deployment where inference runs on separate cores.
Pass ``clock=WallClock()`` for real time.
"""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

from .coverage import CoverageMap, VirginMap, has_input_gain, path_hash, strictly_less_score
from .mutation import MAX_INPUT_LEN, MutationProposal, deterministic_stage, havoc_mutation
from .neural.data import SampleRecord, SampleWriter
from .sieve import AUGMENTED, BASELINE, ByteMask, SieveConfig, choose_strategy, should_execute
from .targets.base import ExecOutcome, ExecResult, TargetProgram

log = logging.getLogger(__name__)

DEFAULT_HAVOC_LIMIT = 512
SNAPSHOT_EVERY = 1000
FAVORED_WEIGHT = 3
STATS_HEADER = "elapsed_s,total_execs,vetoed_execs,queue_size,input_gains,virgin_bits,unique_crashes"


@dataclass
class SeedEntry:
    data: bytes
    id: int
    parent_id: int | None = None
    discovery_time: float = 0.0
    exec_count: int = 0
    favored: bool = False
    coverage: CoverageMap | None = field(default=None, repr=False)
    det_done: bool = False

    def __post_init__(self):
        if not self.data:
            raise ValueError("seed data must be non-empty")


class StatsRow(NamedTuple):
    elapsed_s: float
    total_execs: int
    vetoed_execs: int
    queue_size: int
    input_gains: int
    virgin_bits: int
    unique_crashes: int

    def csv(self) -> str:
        return f"{self.elapsed_s:.6f},{self.total_execs},{self.vetoed_execs},{self.queue_size}," \
               f"{self.input_gains},{self.virgin_bits},{self.unique_crashes}"


@dataclass
class CampaignStats:
    rows: list[StatsRow] = field(default_factory=list)

    def to_csv(self) -> str:
        return "\n".join([STATS_HEADER] + [r.csv() for r in self.rows]) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @property
    def final(self) -> StatsRow:
        return self.rows[-1]

    def at_execs(self, n: int) -> StatsRow:
        """Last row recorded at or before ``n`` executions."""
        best = self.rows[0]
        for r in self.rows:
            if r.total_execs > n:
                break
            best = r
        return best


@dataclass
class Budget:
    execs: int | None = None
    seconds: float | None = None

    def __post_init__(self):
        if self.execs is None and self.seconds is None:
            raise ValueError("budget needs an execution count or a time limit")


class VirtualClock:
    def __init__(self, proposal_cost: float = 2e-6, exec_cost: float = 1e-4, step_cost: float = 1e-8):
        self.proposal_cost = proposal_cost
        self.exec_cost = exec_cost
        self.step_cost = step_cost
        self.elapsed = 0.0

    def on_proposal(self) -> None:
        self.elapsed += self.proposal_cost

    def on_exec(self, steps: int) -> None:
        self.elapsed += self.exec_cost + steps * self.step_cost


class WallClock:
    def __init__(self):
        self._t0 = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._t0

    def on_proposal(self) -> None:
        pass

    def on_exec(self, steps: int) -> None:
        pass


ExecHook = Callable[[SeedEntry, MutationProposal, ExecResult], None]


@dataclass
class CampaignResult:
    stats: CampaignStats
    queue: list[SeedEntry]
    crashes: dict[tuple[int, int], bytes]
    virgin: VirginMap
    proposals: int
    first_crash_exec: int | None
    virgin_history: list[int]

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        (out / "queue").mkdir(parents=True, exist_ok=True)
        (out / "crashes").mkdir(parents=True, exist_ok=True)
        for e in self.queue:
            (out / "queue" / f"id_{e.id:06d}").write_bytes(e.data)
        for (site, h), data in sorted(self.crashes.items()):
            (out / "crashes" / f"site{site}_{h:016x}").write_bytes(data)
        self.stats.write(out / "stats.csv")


def dedup_crash(outcome: ExecOutcome, cmap: CoverageMap, seen: set) -> bool:
    """Register a crash; True if its (site, path hash) pair is new."""
    if not outcome.is_crash:
        raise ValueError("dedup_crash expects a crash outcome")
    key = (outcome.crash_site, path_hash(cmap))
    if key in seen:
        return False
    seen.add(key)
    return True


def cull_queue(queue: Sequence[SeedEntry]) -> list[SeedEntry]:
    """Favor, for every coverage bit any entry sets, the smallest (then
    earliest) entry setting it."""
    best: dict[tuple[int, int], SeedEntry] = {}
    for e in queue:
        if e.coverage is None:
            continue
        rank = (len(e.data), e.id)
        for idx, val in e.coverage.items():
            while val:
                bit = val & -val
                val ^= bit
                cur = best.get((idx, bit))
                if cur is None or rank < (len(cur.data), cur.id):
                    best[(idx, bit)] = e
    chosen = {id(e) for e in best.values()}
    if not best and queue:
        chosen = {id(queue[0])}
    for e in queue:
        e.favored = id(e) in chosen
    return [e for e in queue if e.favored]


class Campaign:
    """One fuzzing instance.  ``masks`` maps seed bytes to a ``ByteMask`` and
    is required in augmented mode."""

    def __init__(self, target: TargetProgram, seeds: Sequence[bytes], mode: str = BASELINE,
                 sieve: SieveConfig | None = None, masks: Callable[[bytes], ByteMask] | None = None,
                 rng_seed: int = 0, limit: int = DEFAULT_HAVOC_LIMIT, dictionary: Sequence[bytes] = (),
                 clock=None, on_exec: ExecHook | None = None, snapshot_every: int = SNAPSHOT_EVERY,
                 max_len: int = MAX_INPUT_LEN):
        if mode not in (BASELINE, AUGMENTED):
            raise ValueError(f"mode must be {BASELINE!r} or {AUGMENTED!r}")
        seeds = [bytes(s) for s in seeds if s]
        if not seeds:
            raise ValueError("at least one non-empty seed is required")
        if mode == AUGMENTED and masks is None:
            raise ValueError("augmented mode needs a model (mask source)")
        self.target = target
        self.mode = mode
        self.sieve = sieve or SieveConfig()
        self.masks = masks
        self.rng = random.Random(rng_seed)
        # separate stream so strategy draws never perturb the mutation sequence
        self.strategy_rng = random.Random(rng_seed ^ 0x5EED_5EED)
        self.limit = limit
        self.dictionary = list(dictionary)
        self.clock = clock or VirtualClock()
        self.on_exec = on_exec
        self.snapshot_every = snapshot_every
        self.max_len = max_len

        self.virgin = VirginMap()
        self.queue: list[SeedEntry] = []
        self.crashes: dict[tuple[int, int], bytes] = {}
        self._crash_keys: set = set()
        self.stats = CampaignStats()
        self.total_execs = 0
        self.vetoed = 0
        self.proposals = 0
        self.input_gains = 0
        self.first_crash_exec: int | None = None
        self.virgin_history: list[int] = []
        self._budget: Budget | None = None
        self._done = False
        for s in seeds:
            self._add_initial(s)

    def _add_initial(self, data: bytes) -> None:
        res = self.target.run(data)
        has_input_gain(self.virgin, res.coverage)
        self.queue.append(SeedEntry(data, len(self.queue), coverage=res.coverage))

    def _exhausted(self) -> bool:
        b = self._budget
        if b.execs is not None and self.total_execs >= b.execs:
            return True
        if b.seconds is not None and self.clock.elapsed >= b.seconds:
            return True
        return False

    def _snapshot(self) -> None:
        self.stats.rows.append(StatsRow(self.clock.elapsed, self.total_execs, self.vetoed, len(self.queue),
                                        self.input_gains, self.virgin.cleared, len(self.crashes)))
        self.virgin_history.append(self.virgin.popcount())

    def _try(self, entry: SeedEntry, prop: MutationProposal, mask: ByteMask | None) -> bool:
        """Veto-check and execute one proposal; True once the budget is spent."""
        self.proposals += 1
        self.clock.on_proposal()
        if mask is not None and not should_execute(prop, mask, self.sieve.alpha):
            self.vetoed += 1
            if self._budget.seconds is not None and self._exhausted():
                self._done = True
                return True
            return False
        res = self.target.run(prop.data)
        self.total_execs += 1
        entry.exec_count += 1
        self.clock.on_exec(res.steps)
        kind = res.outcome.kind
        if kind == "crash":
            if dedup_crash(res.outcome, res.coverage, self._crash_keys):
                self.crashes[(res.outcome.crash_site, path_hash(res.coverage))] = prop.data
                if self.first_crash_exec is None:
                    self.first_crash_exec = self.total_execs
        elif kind == "normal" and has_input_gain(self.virgin, res.coverage):
            self.input_gains += 1
            self.queue.append(SeedEntry(prop.data, len(self.queue), entry.id, self.clock.elapsed,
                                        coverage=res.coverage))
        if self.on_exec is not None:
            self.on_exec(entry, prop, res)
        if self.total_execs % self.snapshot_every == 0:
            self._snapshot()
        if self._exhausted():
            self._done = True
            return True
        return False

    def _fuzz_round(self, entry: SeedEntry) -> None:
        mask = None
        if self.mode == AUGMENTED and choose_strategy(self.strategy_rng, self.sieve.p_explore) == AUGMENTED:
            mask = self.masks(entry.data)
            if len(mask) != len(entry.data):
                raise ValueError("mask length does not match seed length")
        if not entry.det_done:
            entry.det_done = True
            for prop in deterministic_stage(entry.data, self.dictionary):
                if self._try(entry, prop, mask):
                    return
        for _ in range(self.limit):
            prop = havoc_mutation(entry.data, self.rng, self.dictionary, self.max_len)
            if self._try(entry, prop, mask):
                return

    def run(self, budget: Budget) -> CampaignResult:
        self._budget = budget
        self._done = self._exhausted()
        while not self._done:
            execs_before = self.total_execs
            cull_queue(self.queue)
            for entry in list(self.queue):
                for _ in range(FAVORED_WEIGHT if entry.favored else 1):
                    self._fuzz_round(entry)
                    if self._done:
                        break
                if self._done:
                    break
            if not self._done and self.total_execs == execs_before:
                log.warning("a full queue cycle executed nothing; stopping")
                break
        if not self.stats.rows or self.stats.rows[-1].total_execs != self.total_execs:
            self._snapshot()
        return CampaignResult(self.stats, self.queue, self.crashes, self.virgin, self.proposals,
                              self.first_crash_exec, self.virgin_history)


def run_campaign(target: TargetProgram, seeds: Sequence[bytes], mode: str = BASELINE,
                 sieve: SieveConfig | None = None, budget: Budget | int = 10_000, rng_seed: int = 0,
                 masks=None, out_dir: str | Path | None = None, **kwargs) -> CampaignResult:
    if isinstance(budget, int):
        budget = Budget(execs=budget)
    result = Campaign(target, seeds, mode, sieve, masks, rng_seed, **kwargs).run(budget)
    if out_dir is not None:
        result.write(out_dir)
    return result


class SampleCollector:
    """Exec hook that samples executed, length-preserving proposals."""

    def __init__(self, rate: float, rng_seed: int, sink: Callable[[SampleRecord], None]):
        if not 0.0 < rate <= 1.0:
            raise ValueError("rate must lie in (0, 1]")
        self.rate = rate
        self.rng = random.Random(rng_seed ^ 0xC011EC7)
        self.sink = sink
        self.sampled = 0
        self.written = 0
        self.eligible = 0  # length-preserving executions seen

    def __call__(self, entry: SeedEntry, prop: MutationProposal, res: ExecResult) -> None:
        self.eligible += not prop.length_changed
        if self.rng.random() >= self.rate:
            return
        self.sampled += 1
        if prop.length_changed:
            return
        self.sink(SampleRecord(entry.data, prop.data, strictly_less_score(entry.coverage, res.coverage)))
        self.written += 1


def collect_samples(target: TargetProgram, seeds: Sequence[bytes], rate: float = 0.01,
                    budget: Budget | int = 100_000, rng_seed: int = 0, out: str | Path | None = None,
                    sink: Callable[[SampleRecord], None] | None = None, **kwargs) -> int:
    """Run a baseline campaign, writing sampled ``(x, x', score)`` records to
    ``out`` (an NFZD file) and/or ``sink``.  Returns the number written."""
    if isinstance(budget, int):
        budget = Budget(execs=budget)
    fh = open(out, "wb") if out is not None else None
    try:
        writer = SampleWriter(fh) if fh else None

        def emit(rec: SampleRecord) -> None:
            if writer:
                writer.write(rec)
            if sink:
                sink(rec)

        collector = SampleCollector(rate, rng_seed, emit)
        Campaign(target, seeds, BASELINE, rng_seed=rng_seed, on_exec=collector, **kwargs).run(budget)
        return collector.written
    finally:
        if fh:
            fh.close()

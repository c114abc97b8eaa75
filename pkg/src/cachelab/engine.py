"""
Trace-driven simulation of private split L1 caches over a shared L2.

Policy summary:

* LRU replacement in every set, write-back and write-allocate at both levels.
* The L2 is inclusive: evicting an L2 block back-invalidates every L1 copy.
* Write-invalidate coherence with Invalid/Clean/Dirty line states. A write
  removes the block from every other L1 (and from the writer's own L1I); a
  read or fetch that misses while another core holds the block Dirty forces
  that core to write the block back to L2 and keep it Clean.
* Latency is flat per servicing level: L1 hit, L2 hit or memory. Writebacks
  are off the critical path and cost nothing.
* Records are applied in trace order; that order *is* the interleaving of
  the cores.
"""

from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass, fields
from typing import Iterable, NamedTuple, Sequence

from .config import CacheGeometry, HierarchyConfig


class AccessKind(str, enum.Enum):
    READ = "r"
    WRITE = "w"
    IFETCH = "i"


class TraceRecord(NamedTuple):
    core: int
    kind: AccessKind
    address: int


class Level(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    MEMORY = "Memory"


class LineState(str, enum.Enum):
    INVALID = "Invalid"
    CLEAN = "Clean"
    DIRTY = "Dirty"


class AccessOutcome(NamedTuple):
    level_hit: Level
    latency_cycles: int


@dataclass(frozen=True)
class CacheLineState:
    tag: int
    state: LineState
    lru_rank: int  # 0 = most recently used


class Category(str, enum.Enum):
    READ = "read"
    WRITE = "write"
    IFETCH = "ifetch"
    ALL = "all"


@dataclass
class CacheStats:
    read_hits: int = 0
    read_misses: int = 0
    write_hits: int = 0
    write_misses: int = 0
    ifetch_hits: int = 0
    ifetch_misses: int = 0
    evictions: int = 0
    writebacks: int = 0
    invalidations_received: int = 0
    total_miss_latency_cycles: int = 0

    @property
    def reads(self) -> int:
        return self.read_hits + self.read_misses

    @property
    def writes(self) -> int:
        return self.write_hits + self.write_misses

    @property
    def ifetches(self) -> int:
        return self.ifetch_hits + self.ifetch_misses

    @property
    def hits(self) -> int:
        return self.read_hits + self.write_hits + self.ifetch_hits

    @property
    def misses(self) -> int:
        return self.read_misses + self.write_misses + self.ifetch_misses

    @property
    def accesses(self) -> int:
        return self.hits + self.misses

    @property
    def avg_miss_latency(self) -> float:
        return self.total_miss_latency_cycles / self.misses if self.misses else 0.0

    def __add__(self, other: "CacheStats") -> "CacheStats":
        return CacheStats(
            **{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)}
        )


def miss_rate(stats: CacheStats, category: Category | str = Category.ALL) -> float:
    """Misses over accesses for one category (0 when nothing was accessed)."""
    category = Category(category)
    if category is Category.READ:
        misses, total = stats.read_misses, stats.reads
    elif category is Category.WRITE:
        misses, total = stats.write_misses, stats.writes
    elif category is Category.IFETCH:
        misses, total = stats.ifetch_misses, stats.ifetches
    else:
        misses, total = stats.misses, stats.accesses
    return misses / total if total else 0.0


def data_miss_rate(stats: CacheStats) -> float:
    """Miss rate over reads and writes only (instruction fetches excluded)."""
    total = stats.reads + stats.writes
    return (stats.read_misses + stats.write_misses) / total if total else 0.0


@dataclass
class SimReport:
    l1i: list[CacheStats]
    l1d: list[CacheStats]
    l2: CacheStats
    instructions_executed: int = 0
    total_cycles: int = 0
    clock_hz: int = 1

    @property
    def sim_seconds(self) -> float:
        return self.total_cycles / self.clock_hz

    def counters(self) -> tuple:
        """Everything except timing-derived values; clock-independent."""
        return (tuple(self.l1i), tuple(self.l1d), self.l2, self.instructions_executed, self.total_cycles)

    @property
    def l1d_total(self) -> CacheStats:
        return sum(self.l1d, CacheStats())

    @property
    def l1i_total(self) -> CacheStats:
        return sum(self.l1i, CacheStats())


class SimulationError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"record {index}: {message}")


class CoherenceViolation(AssertionError):
    pass


class _Cache:
    """One set-associative LRU cache. Each set maps block -> dirty flag, MRU last."""

    __slots__ = ("geometry", "num_sets", "ways", "sets", "stats")

    def __init__(self, geometry: CacheGeometry):
        self.geometry = geometry
        self.num_sets = geometry.num_sets
        self.ways = geometry.associativity
        self.sets: list[OrderedDict[int, bool]] = [OrderedDict() for _ in range(self.num_sets)]
        self.stats = CacheStats()

    def set_of(self, block: int) -> OrderedDict:
        return self.sets[block % self.num_sets]

    def contains(self, block: int) -> bool:
        return block in self.sets[block % self.num_sets]

    def is_dirty(self, block: int) -> bool:
        return self.sets[block % self.num_sets].get(block, False)

    def remove(self, block: int) -> bool | None:
        """Drop ``block``; returns its dirty flag, or None if it was absent."""
        return self.sets[block % self.num_sets].pop(block, None)

    def lines(self, set_index: int) -> list[CacheLineState]:
        entries = list(self.sets[set_index].items())
        out = []
        for rank, (block, dirty) in enumerate(reversed(entries)):
            out.append(
                CacheLineState(
                    tag=block // self.num_sets,
                    state=LineState.DIRTY if dirty else LineState.CLEAN,
                    lru_rank=rank,
                )
            )
        return out


_STAT_NAMES = {
    AccessKind.READ: ("read_hits", "read_misses"),
    AccessKind.WRITE: ("write_hits", "write_misses"),
    AccessKind.IFETCH: ("ifetch_hits", "ifetch_misses"),
}


def _count(stats: CacheStats, kind: AccessKind, hit: bool) -> None:
    name = _STAT_NAMES[kind][0 if hit else 1]
    setattr(stats, name, getattr(stats, name) + 1)


class CacheHierarchy:
    """Mutable simulation state for one :class:`HierarchyConfig`.

    With ``check_invariants`` set, the single-Dirty-copy and inclusion
    properties are verified after every access and a
    :class:`CoherenceViolation` is raised on the first failure.
    """

    def __init__(self, config: HierarchyConfig, check_invariants: bool = False):
        self.config = config
        self.check_invariants = check_invariants
        self.block_bytes = config.block_size_bytes
        self.l1i = [_Cache(config.l1i) for _ in range(config.core_count)]
        self.l1d = [_Cache(config.l1d) for _ in range(config.core_count)]
        self.l2 = _Cache(config.l2)
        self.instructions = 0
        self.total_cycles = 0

    # -- public -------------------------------------------------------------

    def access(self, record: TraceRecord) -> AccessOutcome:
        core, kind, address = record
        if not 0 <= core < self.config.core_count:
            raise SimulationError(f"core {core} out of range [0, {self.config.core_count})")
        kind = AccessKind(kind)
        block = address // self.block_bytes
        if kind is AccessKind.IFETCH:
            self.instructions += 1
            outcome = self._read(core, block, self.l1i[core], kind)
        elif kind is AccessKind.READ:
            outcome = self._read(core, block, self.l1d[core], kind)
        else:
            outcome = self._write(core, block)
        self.total_cycles += outcome.latency_cycles
        if self.check_invariants:
            self.verify()
        return outcome

    def report(self) -> SimReport:
        return SimReport(
            l1i=[CacheStats(**vars(c.stats)) for c in self.l1i],
            l1d=[CacheStats(**vars(c.stats)) for c in self.l1d],
            l2=CacheStats(**vars(self.l2.stats)),
            instructions_executed=self.instructions,
            total_cycles=self.total_cycles,
            clock_hz=self.config.clock_hz,
        )

    def line_state(self, cache: str, core: int, address: int) -> LineState:
        """State of ``address``'s block in ``cache`` ("l1i", "l1d" or "l2")."""
        target = self.l2 if cache == "l2" else getattr(self, cache)[core]
        block = address // self.block_bytes
        if not target.contains(block):
            return LineState.INVALID
        return LineState.DIRTY if target.is_dirty(block) else LineState.CLEAN

    def verify(self) -> None:
        owners: dict[int, int] = {}
        for core, cache in enumerate(self.l1d):
            for s in cache.sets:
                for block, dirty in s.items():
                    if dirty:
                        if block in owners:
                            raise CoherenceViolation(
                                f"block {block:#x} Dirty in cores {owners[block]} and {core}"
                            )
                        owners[block] = core
        for cache in self.l1i + self.l1d:
            for s in cache.sets:
                for block in s:
                    if not self.l2.contains(block):
                        raise CoherenceViolation(f"inclusion broken for block {block:#x}")
        for group in (self.l1i, self.l1d, [self.l2]):
            for cache in group:
                for s in cache.sets:
                    if len(s) > cache.ways:
                        raise CoherenceViolation("set over capacity")

    # -- internals ----------------------------------------------------------

    def _read(self, core: int, block: int, l1: _Cache, kind: AccessKind) -> AccessOutcome:
        entries = l1.set_of(block)
        if block in entries:
            entries.move_to_end(block)
            _count(l1.stats, kind, True)
            return AccessOutcome(Level.L1, self.config.l1_hit_cycles)

        _count(l1.stats, kind, False)
        for other, cache in enumerate(self.l1d):
            if other != core and cache.is_dirty(block):
                # Owner writes back and keeps a Clean copy.
                cache.set_of(block)[block] = False
                cache.stats.invalidations_received += 1
                self._writeback(cache, block)
        outcome = self._fetch_from_l2(block, kind)
        l1.stats.total_miss_latency_cycles += outcome.latency_cycles
        self._fill_l1(l1, block, dirty=False)
        return outcome

    def _write(self, core: int, block: int) -> AccessOutcome:
        l1 = self.l1d[core]
        entries = l1.set_of(block)
        if block in entries:
            entries.move_to_end(block)
            l1.stats.write_hits += 1
            if not entries[block]:
                self._invalidate_others(core, block)
                entries[block] = True
            return AccessOutcome(Level.L1, self.config.l1_hit_cycles)

        l1.stats.write_misses += 1
        self._invalidate_others(core, block)
        outcome = self._fetch_from_l2(block, AccessKind.WRITE)
        l1.stats.total_miss_latency_cycles += outcome.latency_cycles
        self._fill_l1(l1, block, dirty=True)
        return outcome

    def _invalidate_others(self, core: int, block: int) -> None:
        for other in range(self.config.core_count):
            if other != core:
                dirty = self.l1d[other].remove(block)
                if dirty is not None:
                    self.l1d[other].stats.invalidations_received += 1
                    if dirty:
                        self._writeback(self.l1d[other], block)
            icache = self.l1i[other]
            if icache.remove(block) is not None:
                icache.stats.invalidations_received += 1

    def _writeback(self, l1: _Cache, block: int) -> None:
        """Forward a dirty L1 block to L2, which holds it by inclusion."""
        l1.stats.writebacks += 1
        entries = self.l2.set_of(block)
        entries[block] = True
        entries.move_to_end(block)
        self.l2.stats.write_hits += 1

    def _fetch_from_l2(self, block: int, kind: AccessKind) -> AccessOutcome:
        l2 = self.l2
        entries = l2.set_of(block)
        if block in entries:
            entries.move_to_end(block)
            _count(l2.stats, kind, True)
            return AccessOutcome(Level.L2, self.config.l2_hit_cycles)

        _count(l2.stats, kind, False)
        latency = self.config.memory_latency_cycles
        l2.stats.total_miss_latency_cycles += latency
        if len(entries) >= l2.ways:
            victim, dirty = entries.popitem(last=False)
            l2.stats.evictions += 1
            for cache in self.l1i + self.l1d:
                l1_dirty = cache.remove(victim)
                if l1_dirty is not None:
                    cache.stats.invalidations_received += 1
                    dirty = dirty or l1_dirty
            if dirty:
                l2.stats.writebacks += 1
        entries[block] = False
        return AccessOutcome(Level.MEMORY, latency)

    def _fill_l1(self, l1: _Cache, block: int, dirty: bool) -> None:
        entries = l1.set_of(block)
        if len(entries) >= l1.ways:
            victim, victim_dirty = entries.popitem(last=False)
            l1.stats.evictions += 1
            if victim_dirty:
                self._writeback(l1, victim)
        entries[block] = dirty


def run_trace(
    config: HierarchyConfig,
    trace: Iterable[TraceRecord],
    check_invariants: bool = False,
) -> SimReport:
    """Replay ``trace`` in order on a cold hierarchy and return its counters."""
    sim = CacheHierarchy(config, check_invariants=check_invariants)
    for index, record in enumerate(trace):
        try:
            sim.access(record)
        except SimulationError as exc:
            raise SimulationError(str(exc), index) from None
    return sim.report()


def run_outcomes(config: HierarchyConfig, trace: Sequence[TraceRecord]) -> list[AccessOutcome]:
    """Per-access outcomes for ``trace``; mostly useful for testing."""
    sim = CacheHierarchy(config)
    return [sim.access(r) for r in trace]

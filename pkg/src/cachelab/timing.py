"""
Analytical timing formulas.

All functions are pure. Time is in seconds and latency in cycles unless a
name says otherwise; converting between the two is left to the caller via an
explicit clock cycle time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .config import CacheGeometry, HierarchyConfig
from .engine import SimReport, miss_rate

log = logging.getLogger(__name__)

NS = 1e-9


@dataclass(frozen=True)
class TimingInputs:
    cpu_clock_cycles: float = 0.0
    instruction_count: float = 0.0
    miss_per_instruction_l1: float = 0.0
    miss_penalty_l1: float = 0.0
    miss_rate_l1: float = 0.0
    hit_rate_l2: float = 0.0
    miss_rate_l2: float = 0.0
    mem_access_per_inst: float = 0.0
    miss_penalty_l2: float = 0.0
    clock_cycle_time: float = 0.0

    def __post_init__(self):
        for name in ("miss_rate_l1", "hit_rate_l2", "miss_rate_l2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        for name in (
            "cpu_clock_cycles",
            "instruction_count",
            "miss_per_instruction_l1",
            "miss_penalty_l1",
            "mem_access_per_inst",
            "miss_penalty_l2",
            "clock_cycle_time",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if (self.hit_rate_l2 or self.miss_rate_l2) and not math.isclose(
            self.hit_rate_l2 + self.miss_rate_l2, 1.0, rel_tol=0, abs_tol=1e-9
        ):
            raise ValueError("hit_rate_l2 + miss_rate_l2 must equal 1")


@dataclass(frozen=True)
class AccessTimeInputs:
    """Inputs of the measured average-cache-access-time estimator.

    ``n1`` counts data read hits and ``tn1`` counts instructions, so ``n1``
    may exceed ``tn1`` on read-heavy traces; that is reported through
    :attr:`read_hits_exceed_instructions` rather than rejected.
    """

    n1: float
    tn1: float
    e1: float
    wr1: float
    ml1: float

    def __post_init__(self):
        if not 0.0 <= self.wr1 <= 1.0:
            raise ValueError(f"wr1 must be in [0, 1], got {self.wr1}")
        if self.n1 < 0 or self.tn1 < 0 or self.e1 < 0 or self.ml1 < 0:
            raise ValueError("counts and times must be >= 0")

    @property
    def read_hits_exceed_instructions(self) -> bool:
        return self.n1 > self.tn1


def amat(hit_time: float, miss_rate: float, miss_penalty: float) -> float:
    """hit time + miss rate * miss penalty."""
    if not 0.0 <= miss_rate <= 1.0:
        raise ValueError(f"miss_rate must be in [0, 1], got {miss_rate}")
    if hit_time < 0 or miss_penalty < 0:
        raise ValueError("times must be >= 0")
    return hit_time + miss_rate * miss_penalty


def avg_cache_access_time(inp: AccessTimeInputs) -> float:
    """(n1 / tn1) * e1 + wr1 * ml1."""
    if inp.tn1 == 0:
        raise ValueError("tn1 (instruction count) must be > 0")
    return (inp.n1 / inp.tn1) * inp.e1 + inp.wr1 * inp.ml1


def memory_stall_cycles(inp: TimingInputs) -> float:
    return inp.instruction_count * inp.miss_per_instruction_l1 * inp.miss_penalty_l1


def miss_per_instruction(inp: TimingInputs, verbose: bool = False) -> float:
    """Miss/instruction with the L2 terms added as written.

    The second term mixes a rate with an L2 penalty in cycles, so the result
    is not a ratio in general. With ``verbose`` the conventional two-level
    figures from :func:`standard_misses_per_instruction` are logged beside it.
    """
    value = inp.miss_rate_l1 + (
        inp.hit_rate_l2 * inp.mem_access_per_inst
        + inp.miss_rate_l2 * inp.mem_access_per_inst * inp.miss_penalty_l2
    )
    if verbose:
        l1, l2 = standard_misses_per_instruction(inp)
        log.info(
            "miss/instruction as printed=%.6g; two-level L1 misses/inst=%.6g, "
            "L2 global misses/inst=%.6g",
            value,
            l1,
            l2,
        )
    return value


def standard_misses_per_instruction(inp: TimingInputs) -> tuple[float, float]:
    """Conventional two-level figures: (L1 misses/inst, L2 global misses/inst).

    ``miss_rate_l2`` is taken as the local L2 miss rate.
    """
    l1 = inp.miss_rate_l1 * inp.mem_access_per_inst
    return l1, l1 * inp.miss_rate_l2


def standard_stall_cycles_per_instruction(inp: TimingInputs, l2_hit_cycles: float) -> float:
    l1, l2 = standard_misses_per_instruction(inp)
    return l1 * l2_hit_cycles + l2 * inp.miss_penalty_l2


def cpu_execution_time(inp: TimingInputs) -> float:
    return (inp.cpu_clock_cycles + memory_stall_cycles(inp)) * inp.clock_cycle_time


def improvement_in_execution_time(delta_access_per_inst: float, inst_count: float) -> float:
    """Execution time saved when each instruction's access time drops by a delta."""
    if delta_access_per_inst < 0 or inst_count < 0:
        raise ValueError("arguments must be >= 0")
    return delta_access_per_inst * inst_count


# -- bridges from simulation results -----------------------------------------


def timing_inputs_from_report(report: SimReport, config: HierarchyConfig) -> TimingInputs:
    """Map a simulation onto :class:`TimingInputs`.

    L1 here means all L1s of all cores, I and D together. Hit cycles form
    ``cpu_clock_cycles`` and the L1 miss latencies form the stall term, so
    :func:`cpu_execution_time` reproduces ``report.sim_seconds``.
    """
    l1 = report.l1i_total + report.l1d_total
    ic = report.instructions_executed
    l2_rate = miss_rate(report.l2)
    data_refs = report.l1d_total.accesses
    return TimingInputs(
        cpu_clock_cycles=l1.hits * config.l1_hit_cycles,
        instruction_count=ic,
        miss_per_instruction_l1=l1.misses / ic if ic else 0.0,
        miss_penalty_l1=l1.avg_miss_latency,
        miss_rate_l1=miss_rate(l1),
        hit_rate_l2=1.0 - l2_rate if report.l2.accesses else 0.0,
        miss_rate_l2=l2_rate,
        mem_access_per_inst=data_refs / ic if ic else 0.0,
        miss_penalty_l2=config.memory_latency_cycles,
        clock_cycle_time=config.cycle_time_s,
    )


def access_time_inputs_from_report(report: SimReport, config: HierarchyConfig) -> AccessTimeInputs:
    """n1 = L1d read hits, tn1 = instructions, e1 = sim-seconds,
    wr1 = L1d write miss rate, ml1 = L1d average miss latency in seconds."""
    l1d = report.l1d_total
    return AccessTimeInputs(
        n1=l1d.read_hits,
        tn1=report.instructions_executed,
        e1=report.sim_seconds,
        wr1=miss_rate(l1d, "write"),
        ml1=config.cycles_to_seconds(l1d.avg_miss_latency),
    )


@dataclass(frozen=True)
class HitTimeModel:
    """hit_time = base + slope * log2(set count), in seconds.

    A monotone stand-in for a circuit-level access-time model. The defaults
    put a 512 kB, 2-way, 64 B-block cache (4096 sets) at 3.215 ns, the
    measured dual-core access time at that size, with 0.25 ns per doubling.
    """

    base: float = 0.215 * NS
    slope: float = 0.25 * NS

    def __call__(self, geometry: CacheGeometry) -> float:
        return self.base + self.slope * math.log2(geometry.num_sets)

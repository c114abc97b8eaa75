"""
Closed-form shared-cache contention probabilities and a Monte Carlo check.

The closed forms are evaluated exactly as published, including where they
leave the [0, 1] range. :func:`monte_carlo` simulates cores choosing blocks
(and written values) uniformly at random so each closed form can be set
against an empirical frequency; :func:`compare` lines the two up.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np


class OutOfModelWarning(RuntimeWarning):
    """A closed form produced a "probability" above 1."""


class WriteCase(enum.IntEnum):
    SAME_CONTENT_SAME_BLOCK = 1
    DIFF_CONTENT_SAME_BLOCK = 2
    SAME_CONTENT_DIFF_BLOCK = 3
    DIFF_CONTENT_DIFF_BLOCK = 4


@dataclass(frozen=True)
class ContentionScenario:
    """n cache blocks, p cores, r simultaneous requests (one per core at
    most) and k distinct values written / operations performed."""

    n: int
    p: int = 1
    r: int = 1
    k: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not 0 <= self.r <= self.p:
            raise ValueError(f"r must satisfy 0 <= r <= p (one request per core), got r={self.r}, p={self.p}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    def require_k(self) -> None:
        if self.k >= self.p:
            raise ValueError(f"requires k < p (got k={self.k}, p={self.p})")


def _flag(value: float, what: str) -> float:
    if value > 1.0:
        warnings.warn(f"{what} = {value:g} exceeds 1: outside the model's domain", OutOfModelWarning, stacklevel=3)
    return value


def is_out_of_model(value: float) -> bool:
    return value > 1.0


def read_simultaneous(scenario: ContentionScenario) -> float:
    """(1/n)^r."""
    return (1.0 / scenario.n) ** scenario.r


def write_probability(case: WriteCase | int, scenario: ContentionScenario) -> float:
    """Cases 1 and 2 give 1/n; cases 3 and 4 give k/n (which may exceed 1)."""
    case = WriteCase(case)
    if case in (WriteCase.SAME_CONTENT_SAME_BLOCK, WriteCase.DIFF_CONTENT_SAME_BLOCK):
        return 1.0 / scenario.n
    scenario.require_k()
    return _flag(scenario.k / scenario.n, f"P(case {int(case)})")


def mixed_access(scenario: ContentionScenario, same_block: bool) -> float:
    """Reads and writes together: 1/n on different blocks, k/n on the same one."""
    if not same_block:
        return 1.0 / scenario.n
    scenario.require_k()
    return _flag(scenario.k / scenario.n, "mixed same-block")


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float

    def within(self, expected: float, sigmas: float = 3.0) -> bool:
        if self.std_error == 0:
            return math.isclose(self.value, expected, rel_tol=0, abs_tol=1e-12)
        return abs(self.value - expected) <= sigmas * self.std_error


@dataclass(frozen=True)
class EmpiricalReport:
    """Frequencies over ``trials`` rounds of r uniform block choices.

    * ``specific_block``: block 0 is chosen by at least one request.
    * ``all_on_specific``: every request chose block 0.
    * ``collision_prob``: every request chose the same block (any block).
    * ``distinct_blocks``: mean number of distinct blocks touched.
    * ``case_freq``: the four write cases, classifying "same block" and
      "same content" as all r writers agreeing.
    """

    scenario: ContentionScenario
    trials: int
    seed: int
    specific_block: Estimate
    all_on_specific: Estimate
    collision_prob: Estimate
    distinct_blocks: Estimate
    case_freq: dict[WriteCase, Estimate]


def _binomial(hits: np.ndarray, trials: int) -> Estimate:
    f = float(np.count_nonzero(hits)) / trials
    return Estimate(f, math.sqrt(f * (1.0 - f) / trials))


def monte_carlo(scenario: ContentionScenario, trials: int, seed: int = 0) -> EmpiricalReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n, r, k = scenario.n, scenario.r, scenario.k
    blocks = rng.integers(0, n, size=(trials, r))
    values = rng.integers(0, k, size=(trials, r))

    if r:
        same_block = np.all(blocks == blocks[:, :1], axis=1)
        same_value = np.all(values == values[:, :1], axis=1)
        # rows sorted so distinct counts are 1 + number of value changes
        ordered = np.sort(blocks, axis=1)
        distinct = 1 + np.count_nonzero(np.diff(ordered, axis=1), axis=1)
    else:
        same_block = np.ones(trials, dtype=bool)
        same_value = np.ones(trials, dtype=bool)
        distinct = np.zeros(trials, dtype=np.int64)

    specific = np.any(blocks == 0, axis=1)
    all_zero = np.all(blocks == 0, axis=1)
    sd = float(np.std(distinct, ddof=1)) if trials > 1 else 0.0

    cases = {
        WriteCase.SAME_CONTENT_SAME_BLOCK: same_block & same_value,
        WriteCase.DIFF_CONTENT_SAME_BLOCK: same_block & ~same_value,
        WriteCase.SAME_CONTENT_DIFF_BLOCK: ~same_block & same_value,
        WriteCase.DIFF_CONTENT_DIFF_BLOCK: ~same_block & ~same_value,
    }
    return EmpiricalReport(
        scenario=scenario,
        trials=trials,
        seed=seed,
        specific_block=_binomial(specific, trials),
        all_on_specific=_binomial(all_zero, trials),
        collision_prob=_binomial(same_block, trials),
        distinct_blocks=Estimate(float(np.mean(distinct)), sd / math.sqrt(trials)),
        case_freq={case: _binomial(mask, trials) for case, mask in cases.items()},
    )


@dataclass(frozen=True)
class ComparisonRow:
    quantity: str
    closed_form: float | None
    empirical: Estimate
    exact: float | None  # exact probability under the uniform model

    @property
    def agrees(self) -> bool | None:
        if self.closed_form is None:
            return None
        return self.empirical.within(self.closed_form)


def compare(scenario: ContentionScenario, trials: int, seed: int = 0) -> list[ComparisonRow]:
    """Closed forms next to Monte Carlo estimates and exact uniform-model values.

    Rows are reported, not asserted: for r > 1 the read formula is expected to
    disagree with the collision frequency.
    """
    emp = monte_carlo(scenario, trials, seed)
    n, r = scenario.n, scenario.r
    closed = read_simultaneous(scenario)
    rows = [
        ComparisonRow("read: specific block accessed", closed, emp.specific_block, 1 - (1 - 1 / n) ** r),
        ComparisonRow("read: all requests on a given block", closed, emp.all_on_specific, (1 / n) ** r),
        ComparisonRow(
            "read: all requests on the same block",
            closed,
            emp.collision_prob,
            (1 / n) ** (r - 1) if r else 1.0,
        ),
        ComparisonRow(
            "read: expected distinct blocks (count reading)",
            closed,
            emp.distinct_blocks,
            n * (1 - (1 - 1 / n) ** r),
        ),
    ]
    k_ok = scenario.k < scenario.p
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfModelWarning)
        for case in WriteCase:
            value = write_probability(case, scenario) if k_ok or case <= 2 else None
            rows.append(ComparisonRow(f"write case {int(case)}: {case.name.lower()}", value, emp.case_freq[case], None))
    return rows

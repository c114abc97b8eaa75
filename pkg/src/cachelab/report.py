"""
CSV reports and parameter sweeps.

Data files are byte-stable for fixed inputs: floats are printed with six
significant digits and nothing host-dependent is written. Per-run metadata
goes to a JSON sidecar next to the data file.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from . import __version__
from .config import (
    CONFIG_KEYS,
    KB,
    ConfigError,
    HierarchyConfig,
    config_to_dict,
    parse_config_text,
    validate_config,
)
from .engine import CacheStats, SimReport, miss_rate, run_trace
from .timing import (
    NS,
    HitTimeModel,
    access_time_inputs_from_report,
    amat,
    avg_cache_access_time,
)
from .workloads import GeneratorParams, TraceFile, Workload, generate

SIMREPORT_COLUMNS = (
    "cache,core,reads,read_hits,read_misses,writes,write_hits,write_misses,"
    "ifetches,ifetch_hits,ifetch_misses,evictions,writebacks,invalidations,"
    "avg_miss_latency_cycles"
).split(",")
SWEEP_COLUMNS = (
    "cores,l2_bytes,miss_rate_l1d,miss_rate_l2,avg_miss_latency_ns,amat_ns,"
    "paper_access_time_ns,execution_time_s"
).split(",")


def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def _stats_row(cache: str, core: int | str, s: CacheStats) -> list:
    return [
        cache,
        core,
        s.reads,
        s.read_hits,
        s.read_misses,
        s.writes,
        s.write_hits,
        s.write_misses,
        s.ifetches,
        s.ifetch_hits,
        s.ifetch_misses,
        s.evictions,
        s.writebacks,
        s.invalidations_received,
        float(s.avg_miss_latency),
    ]


def simreport_rows(report: SimReport) -> list[list]:
    rows = [_stats_row("l1i", c, s) for c, s in enumerate(report.l1i)]
    rows += [_stats_row("l1d", c, s) for c, s in enumerate(report.l1d)]
    rows.append(_stats_row("l2", "", report.l2))
    return rows


def write_csv(sink: TextIO, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])


def simreport_csv(report: SimReport) -> str:
    out = io.StringIO()
    write_csv(out, SIMREPORT_COLUMNS, simreport_rows(report))
    return out.getvalue()


def report_metadata(report: SimReport, config: HierarchyConfig) -> dict:
    return {
        "cachelab_version": __version__,
        "instructions_executed": report.instructions_executed,
        "total_cycles": report.total_cycles,
        "clock_hz": report.clock_hz,
        "sim_seconds": report.sim_seconds,
        "config": config_to_dict(config),
    }


# -- sweeps ------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    cores: int
    l2_bytes: int
    miss_rate_l1d: float
    miss_rate_l2: float
    avg_miss_latency_ns: float
    amat_ns: float
    paper_access_time_ns: float
    execution_time_s: float

    def as_list(self) -> list:
        return [getattr(self, name) for name in SWEEP_COLUMNS]


@dataclass(frozen=True)
class SweepSpec:
    l2_sizes: tuple[int, ...]
    core_counts: tuple[int, ...]
    workload: GeneratorParams
    hit_time_model: HitTimeModel = HitTimeModel()
    base: dict = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        if not self.l2_sizes or not self.core_counts:
            raise ConfigError("sweep needs at least one L2 size and one core count")
        for cores in self.core_counts:
            for size in self.l2_sizes:
                self.config_for(cores, size)

    def config_for(self, cores: int, l2_bytes: int) -> HierarchyConfig:
        doc = {"allow_non_pow2": "true", **self.base}
        doc["cores"] = str(cores)
        doc["l2_kb"] = str(l2_bytes / KB) if l2_bytes % KB else str(l2_bytes // KB)
        try:
            return validate_config(doc)
        except ConfigError as exc:
            raise ConfigError(f"(cores={cores}, l2_bytes={l2_bytes}): {exc}") from None

    def params_for(self, cores: int) -> GeneratorParams:
        return dataclasses.replace(self.workload, cores=cores)

    def combinations(self) -> list[tuple[int, int]]:
        return [(c, s) for c in sorted(self.core_counts) for s in sorted(self.l2_sizes)]


FULL_L2_KB = (512, 1024, 2048, 4096, 6144, 8192, 12288)
SMALL_L2_KB = (8, 16, 32, 64)

BUILTIN_SPECS = {
    "paper-grid": lambda: SweepSpec(
        l2_sizes=tuple(kb * KB for kb in FULL_L2_KB),
        core_counts=(2, 4),
        workload=GeneratorParams(Workload.RADIX, cores=2, scale=16384, iterations=4),
        base={"l1d_kb": "32", "l1i_kb": "32"},
        name="paper-grid",
    ),
    "small-grid": lambda: SweepSpec(
        l2_sizes=tuple(kb * KB for kb in SMALL_L2_KB),
        core_counts=(2, 4),
        workload=GeneratorParams(Workload.RADIX, cores=2, scale=2048, iterations=4),
        base={"l1d_kb": "4", "l1i_kb": "4"},
        name="small-grid",
    ),
}

SWEEP_KEYS = {"workload", "scale", "iterations", "seed", "hit_base_ns", "hit_slope_ns"}


def _int_list(key: str, text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}", key) from None


def _number(key: str, text: str, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", key) from None


def parse_sweep_spec(lines: Iterable[str], name: str = "custom") -> SweepSpec:
    """Sweep spec file: config keys as ``key = value``, with ``cores`` and
    ``l2_kb`` as comma-separated lists, plus ``workload``, ``scale``,
    ``iterations``, ``seed``, ``hit_base_ns`` and ``hit_slope_ns``."""
    doc = parse_config_text(lines)
    unknown = sorted(set(doc) - set(CONFIG_KEYS) - SWEEP_KEYS)
    if unknown:
        raise ConfigError("unknown sweep key", unknown[0])
    for key in ("cores", "l2_kb", "l1d_kb", "workload", "scale"):
        if key not in doc:
            raise ConfigError("missing required key", key)
    cores = _int_list("cores", doc.pop("cores"))
    sizes = tuple(kb * KB for kb in _int_list("l2_kb", doc.pop("l2_kb")))
    try:
        params = GeneratorParams(
            Workload(doc.pop("workload")),
            cores=cores[0] if cores else 1,
            scale=_number("scale", doc.pop("scale"), int),
            iterations=_number("iterations", doc.pop("iterations", "1"), int),
            seed=_number("seed", doc.pop("seed", "0"), int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "workload") from None
    model = HitTimeModel(
        base=_number("hit_base_ns", doc.pop("hit_base_ns", str(HitTimeModel.base / NS))) * NS,
        slope=_number("hit_slope_ns", doc.pop("hit_slope_ns", str(HitTimeModel.slope / NS))) * NS,
    )
    return SweepSpec(sizes, cores, params, model, base=doc, name=name)


def load_sweep_spec(source: str) -> SweepSpec:
    """A built-in spec name (``paper-grid``, ``small-grid``) or a file path."""
    if source in BUILTIN_SPECS:
        return BUILTIN_SPECS[source]()
    with open(source, encoding="utf-8") as fh:
        return parse_sweep_spec(fh, name=source)


def sweep_row(
    report: SimReport, config: HierarchyConfig, model: HitTimeModel
) -> SweepRow:
    """Derive one sweep row from a simulation; see the column docs in README."""
    l1d = report.l1d_total
    hit_time = model(config.l2)
    penalty = config.cycles_to_seconds(config.memory_latency_cycles)
    l2_rate = miss_rate(report.l2)
    if report.instructions_executed:
        estimate = avg_cache_access_time(access_time_inputs_from_report(report, config))
    else:
        estimate = 0.0
    return SweepRow(
        cores=config.core_count,
        l2_bytes=config.l2.capacity_bytes,
        miss_rate_l1d=miss_rate(l1d),
        miss_rate_l2=l2_rate,
        avg_miss_latency_ns=config.cycles_to_seconds(l1d.avg_miss_latency) / NS,
        amat_ns=amat(hit_time, l2_rate, penalty) / NS,
        paper_access_time_ns=estimate / NS,
        execution_time_s=report.sim_seconds,
    )


def _run_one(args: tuple[HierarchyConfig, GeneratorParams]) -> SimReport:
    config, params = args
    return run_trace(config, generate(params))


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]
    reports: list[SimReport]

    def rows_for(self, cores: int) -> list[SweepRow]:
        return [r for r in self.rows if r.cores == cores]


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Simulate every (cores, size) pair, rows ordered by (cores, size)."""
    combos = spec.combinations()
    configs = [spec.config_for(c, s) for c, s in combos]
    reports: list[SimReport] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_one, [(cfg, spec.params_for(c)) for cfg, (c, _) in zip(configs, combos)]))
    else:
        traces: dict[int, TraceFile] = {}
        for cfg, (cores, size) in zip(configs, combos):
            if cores not in traces:
                traces = {cores: generate(spec.params_for(cores))}
            try:
                reports.append(run_trace(cfg, traces[cores]))
            except Exception as exc:
                raise RuntimeError(f"sweep failed at (cores={cores}, l2_bytes={size}): {exc}") from exc
    rows = [sweep_row(rep, cfg, spec.hit_time_model) for rep, cfg in zip(reports, configs)]
    return SweepResult(spec, rows, reports)


def sweep_csv(result: SweepResult) -> str:
    out = io.StringIO()
    write_csv(out, SWEEP_COLUMNS, (r.as_list() for r in result.rows))
    return out.getvalue()


def sweep_reports_csv(result: SweepResult) -> str:
    """Every SimReport behind a sweep, keyed by (cores, l2_bytes)."""
    out = io.StringIO()
    rows = []
    for row, rep in zip(result.rows, result.reports):
        rows += [[row.cores, row.l2_bytes, *r] for r in simreport_rows(rep)]
    write_csv(out, ["cores", "l2_bytes", *SIMREPORT_COLUMNS], rows)
    return out.getvalue()


def sweep_metadata(result: SweepResult) -> dict:
    spec = result.spec
    return {
        "cachelab_version": __version__,
        "spec": spec.name,
        "workload": {k: (v.value if hasattr(v, "value") else v) for k, v in vars(spec.workload).items()},
        "hit_time_model_ns": {"base": spec.hit_time_model.base / NS, "slope": spec.hit_time_model.slope / NS},
        "runs": [
            {
                "cores": row.cores,
                "l2_bytes": row.l2_bytes,
                "instructions_executed": rep.instructions_executed,
                "total_cycles": rep.total_cycles,
                "clock_hz": rep.clock_hz,
            }
            for row, rep in zip(result.rows, result.reports)
        ],
    }


def dump_json(data: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")

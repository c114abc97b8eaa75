"""
Trace files and synthetic benchmark generators.

Trace format (v1)::

    #cachelab-trace v1 cores=<int> count=<int> generator=<name> seed=<int>
    <core> <r|w|i> <0x-hex address>
    ...

``#`` comment lines are allowed only before the header. Fields are separated
by single spaces and lines end with LF.

The generators reproduce the sharing structure of three parallel kernels
(radix sort, a blocked FFT transpose and a fast multipole step) rather than
their arithmetic. Every generator is a pure function of its parameters,
seed included, and lays memory out as explicitly designated per-core
private regions plus shared regions (see :class:`MemoryLayout`).
"""

from __future__ import annotations

import enum
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

from .engine import AccessKind, TraceRecord

HEADER_RE = re.compile(
    r"#cachelab-trace v1 cores=(\d+) count=(\d+) generator=(\S+) seed=(-?\d+)"
)
RECORD_RE = re.compile(r"(\d+) (\S+) (0x[0-9a-f]+)")
MAX_ADDRESS = (1 << 64) - 1
REGION_ALIGN = 4096

_KINDS = {"r": AccessKind.READ, "w": AccessKind.WRITE, "i": AccessKind.IFETCH}


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, text: str | None = None):
        self.line = line
        self.text = text
        where = f" at line {line}" if line is not None else ""
        shown = f": {text!r}" if text is not None else ""
        super().__init__(f"{message}{where}{shown}")


@dataclass
class TraceFile:
    records: list[TraceRecord]
    core_count: int
    generator: str = "manual"
    seed: int = 0

    @property
    def record_count(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def parse_trace(stream: Iterable[str]) -> TraceFile:
    """Parse a v1 trace. Errors carry the 1-based line number."""
    header = None
    records: list[TraceRecord] = []
    lineno = 0
    for lineno, raw in enumerate(stream, 1):
        line = raw[:-1] if raw.endswith("\n") else raw
        if header is None:
            if line.startswith("#cachelab-trace"):
                m = HEADER_RE.fullmatch(line)
                if not m:
                    raise TraceFormatError("malformed header", lineno, line)
                header = (int(m[1]), int(m[2]), m[3], int(m[4]))
                if header[0] < 1:
                    raise TraceFormatError("header declares no cores", lineno, line)
                cores = header[0]
            elif line.startswith("#") or not line.strip():
                continue
            else:
                raise TraceFormatError("record before header", lineno, line)
            continue

        m = RECORD_RE.fullmatch(line)
        if not m:
            parts = line.split(" ")
            if len(parts) == 3 and parts[0].isdigit() and parts[1] not in _KINDS:
                raise TraceFormatError(f"unknown access kind {parts[1]!r}", lineno)
            raise TraceFormatError("malformed record", lineno, line)
        kind = _KINDS.get(m[2])
        if kind is None:
            raise TraceFormatError(f"unknown access kind {m[2]!r}", lineno)
        core = int(m[1])
        if core >= cores:
            raise TraceFormatError(f"core {core} out of range for cores={cores}", lineno, line)
        address = int(m[3], 16)
        if address > MAX_ADDRESS:
            raise TraceFormatError("address exceeds 64 bits", lineno, line)
        records.append(TraceRecord(core, kind, address))

    if header is None:
        raise TraceFormatError("missing '#cachelab-trace v1' header", lineno + 1 if lineno else 1)
    if header[1] != len(records):
        raise TraceFormatError(f"header count={header[1]} but {len(records)} records follow")
    return TraceFile(records, core_count=header[0], generator=header[2], seed=header[3])


def read_trace(path: str) -> TraceFile:
    with open(path, encoding="utf-8", newline="\n") as fh:
        return parse_trace(fh)


def emit_trace(trace: TraceFile, sink: TextIO) -> None:
    if not re.fullmatch(r"\S+", trace.generator):
        raise ValueError(f"generator name must be non-empty without spaces: {trace.generator!r}")
    sink.write(
        f"#cachelab-trace v1 cores={trace.core_count} count={len(trace.records)} "
        f"generator={trace.generator} seed={trace.seed}\n"
    )
    chunk = []
    for core, kind, address in trace.records:
        chunk.append(f"{core} {kind.value} {address:#x}\n")
        if len(chunk) >= 65536:
            sink.write("".join(chunk))
            chunk.clear()
    sink.write("".join(chunk))


def write_trace(trace: TraceFile, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        emit_trace(trace, fh)


# -- memory layout -----------------------------------------------------------


@dataclass(frozen=True)
class Region:
    name: str
    start: int
    size: int
    owner: int | None  # None for a shared region

    @property
    def end(self) -> int:
        return self.start + self.size

    def __contains__(self, address: int) -> bool:
        return self.start <= address < self.end


@dataclass
class MemoryLayout:
    """Packs regions contiguously (4 kB aligned) from ``base``.

    Packing keeps a generator's footprint one contiguous range, so a cache
    at least that large sees no conflict misses from region placement.
    """

    base: int = 0x10000000
    regions: list[Region] = field(default_factory=list)

    def _alloc(self, name: str, size: int, owner: int | None) -> int:
        start = self.regions[-1].end if self.regions else self.base
        start = -(-start // REGION_ALIGN) * REGION_ALIGN
        size = max(size, 1)
        self.regions.append(Region(name, start, size, owner))
        return start

    def private(self, name: str, core: int, size: int) -> int:
        return self._alloc(f"{name}[{core}]", size, core)

    def shared(self, name: str, size: int) -> int:
        return self._alloc(name, size, None)

    def region_of(self, address: int) -> Region | None:
        for region in self.regions:
            if address in region:
                return region
        return None

    def allowed(self, core: int, address: int) -> bool:
        region = self.region_of(address)
        return region is not None and region.owner in (None, core)


# -- generators --------------------------------------------------------------


class Workload(str, enum.Enum):
    RADIX = "radix"
    FFT = "fft"
    FMM = "fmm"


DEFAULT_ELEMENT_BYTES = {Workload.RADIX: 4, Workload.FFT: 16, Workload.FMM: 32}


@dataclass(frozen=True)
class GeneratorParams:
    """``scale`` is the key count (radix), matrix side (FFT) or body count (FMM)."""

    workload: Workload
    cores: int
    scale: int
    iterations: int = 1
    seed: int = 0
    ifetch_every: int = 4
    element_bytes: int | None = None
    radix_buckets: int = 256
    bodies_per_cell: int = 8
    fmm_neighbors: int = 4
    code_bytes: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "workload", Workload(self.workload))
        for name in ("cores", "scale", "iterations", "ifetch_every", "radix_buckets",
                     "bodies_per_cell", "code_bytes"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.fmm_neighbors < 0:
            raise ValueError("fmm_neighbors must be >= 0")
        if self.element_bytes is not None and self.element_bytes <= 0:
            raise ValueError("element_bytes must be positive")
        if self.workload is Workload.FFT and self.scale % self.cores:
            raise ValueError(
                f"fft: cores={self.cores} must divide the matrix dimension n={self.scale}"
            )

    @property
    def elem(self) -> int:
        return self.element_bytes or DEFAULT_ELEMENT_BYTES[self.workload]


class _Emitter:
    """Collects one core's data references, inserting an instruction fetch
    from that core's code region before every ``ifetch_every`` of them."""

    def __init__(self, core: int, code_base: int, code_bytes: int, every: int):
        self.core = core
        self.code_base = code_base
        self.code_bytes = code_bytes
        self.every = every
        self.pc = 0
        self.pending = 0
        self.out: list[TraceRecord] = []

    def _data(self, kind: AccessKind, address: int) -> None:
        if self.pending == 0:
            self.out.append(TraceRecord(self.core, AccessKind.IFETCH, self.code_base + self.pc))
            self.pc = (self.pc + 4) % self.code_bytes
        self.out.append(TraceRecord(self.core, kind, address))
        self.pending = (self.pending + 1) % self.every

    def read(self, address: int) -> None:
        self._data(AccessKind.READ, address)

    def write(self, address: int) -> None:
        self._data(AccessKind.WRITE, address)

    def take(self) -> list[TraceRecord]:
        out, self.out = self.out, []
        return out


def _interleave(phases: list[list[TraceRecord]], batch: int) -> list[TraceRecord]:
    """Round-robin the cores' records of one phase, ``batch`` at a time."""
    out: list[TraceRecord] = []
    cursors = [0] * len(phases)
    live = True
    while live:
        live = False
        for core, recs in enumerate(phases):
            i = cursors[core]
            if i < len(recs):
                out.extend(recs[i:i + batch])
                cursors[core] = i + batch
                live = True
    return out


class _Builder:
    def __init__(self, params: GeneratorParams, layout: MemoryLayout):
        self.params = params
        code = {r.name: r.start for r in layout.regions}
        self.emitters = [
            _Emitter(c, code[f"code[{c}]"], params.code_bytes, params.ifetch_every)
            for c in range(params.cores)
        ]
        self.records: list[TraceRecord] = []

    def barrier(self) -> None:
        """End a phase: interleave what each core emitted since the last barrier."""
        batch = self.params.ifetch_every + 1
        self.records.extend(_interleave([e.take() for e in self.emitters], batch))

    def finish(self) -> TraceFile:
        self.barrier()
        p = self.params
        return TraceFile(self.records, core_count=p.cores, generator=p.workload.value, seed=p.seed)


def _partition(total: int, parts: int, index: int) -> range:
    return range(total * index // parts, total * (index + 1) // parts)


def radix_layout(params: GeneratorParams) -> MemoryLayout:
    layout = MemoryLayout()
    for c in range(params.cores):
        layout.private("code", c, params.code_bytes)
    hist_bytes = params.radix_buckets * 4
    for c in range(params.cores):
        keys = len(_partition(params.scale, params.cores, c))
        layout.private("keys", c, keys * params.elem)
    for c in range(params.cores):
        layout.shared(f"local_hist[{c}]", hist_bytes)
    layout.shared("global_hist", hist_bytes)
    return layout


def generate_radix(params: GeneratorParams) -> TraceFile:
    """Radix sort passes.

    Per iteration and core: write its key block; build the local histogram
    (read key, read/write its bucket); read every other core's histogram
    (the all-to-all exchange); then read/write every bucket of the shared
    global histogram. Digit values come from a seeded generator.
    """
    if params.workload is not Workload.RADIX:
        raise ValueError("generate_radix needs workload=radix")
    layout = radix_layout(params)
    by_name = {r.name: r.start for r in layout.regions}
    b = _Builder(params, layout)
    rng = random.Random(params.seed)
    p, buckets, elem = params.cores, params.radix_buckets, params.elem

    for _ in range(params.iterations):
        for c, em in enumerate(b.emitters):
            base = by_name[f"keys[{c}]"]
            for i in range(len(_partition(params.scale, p, c))):
                em.write(base + i * elem)
        b.barrier()
        for c, em in enumerate(b.emitters):
            base = by_name[f"keys[{c}]"]
            hist = by_name[f"local_hist[{c}]"]
            for i in range(len(_partition(params.scale, p, c))):
                em.read(base + i * elem)
                slot = hist + rng.randrange(buckets) * 4
                em.read(slot)
                em.write(slot)
        b.barrier()
        for c, em in enumerate(b.emitters):
            for other in range(p):
                if other != c:
                    hist = by_name[f"local_hist[{other}]"]
                    for j in range(buckets):
                        em.read(hist + j * 4)
        b.barrier()
        ghist = by_name["global_hist"]
        for em in b.emitters:
            for j in range(buckets):
                em.read(ghist + j * 4)
                em.write(ghist + j * 4)
        b.barrier()
    return b.finish()


def fft_layout(params: GeneratorParams) -> MemoryLayout:
    layout = MemoryLayout()
    for c in range(params.cores):
        layout.private("code", c, params.code_bytes)
    matrix = params.scale * params.scale * params.elem
    layout.shared("src", matrix)
    layout.shared("dst", matrix)
    return layout


def generate_fft(params: GeneratorParams) -> TraceFile:
    """Blocked transpose of an n x n complex matrix over p cores.

    Core c owns source rows [c*n/p, (c+1)*n/p). It moves each of its p tiles
    (n/p x n/p) to the transposed position, reading the source tile row-major
    and writing the destination tile column-major.
    """
    if params.workload is not Workload.FFT:
        raise ValueError("generate_fft needs workload=fft")
    layout = fft_layout(params)
    src, dst = layout.regions[-2].start, layout.regions[-1].start
    n, p, elem = params.scale, params.cores, params.elem
    t = n // p
    b = _Builder(params, layout)
    for _ in range(params.iterations):
        for c, em in enumerate(b.emitters):
            for tile in range(p):
                for i in range(c * t, (c + 1) * t):
                    for j in range(tile * t, (tile + 1) * t):
                        em.read(src + (i * n + j) * elem)
                        em.write(dst + (j * n + i) * elem)
        b.barrier()
    return b.finish()


def fmm_cells(params: GeneratorParams) -> int:
    return -(-params.scale // params.bodies_per_cell)


def fmm_owner(params: GeneratorParams, cell: int) -> int:
    return cell * params.cores // fmm_cells(params)


def fmm_layout(params: GeneratorParams) -> MemoryLayout:
    layout = MemoryLayout()
    for c in range(params.cores):
        layout.private("code", c, params.code_bytes)
    layout.shared("bodies", params.scale * params.elem)
    cells = fmm_cells(params)
    for c in range(params.cores):
        own = [x for x in range(cells) if fmm_owner(params, x) == c]
        owned_bodies = sum(len(_cell_bodies(params, x)) for x in own)
        layout.private("forces", c, owned_bodies * params.elem)
    return layout


def _cell_bodies(params: GeneratorParams, cell: int) -> range:
    lo = cell * params.bodies_per_cell
    return range(lo, min(lo + params.bodies_per_cell, params.scale))


def generate_fmm(params: GeneratorParams) -> TraceFile:
    """Fast-multipole style time steps over cells of bodies.

    Cells are split into contiguous per-core groups. Per time step each core
    reads the bodies of each of its cells, reads the bodies of a seeded
    random set of other cells (the unstructured interaction list), and
    writes the force records of its own bodies.
    """
    if params.workload is not Workload.FMM:
        raise ValueError("generate_fmm needs workload=fmm")
    layout = fmm_layout(params)
    by_name = {r.name: r.start for r in layout.regions}
    bodies = by_name["bodies"]
    elem = params.elem
    cells = fmm_cells(params)
    owned = [[x for x in range(cells) if fmm_owner(params, x) == c] for c in range(params.cores)]
    rng = random.Random(params.seed)
    b = _Builder(params, layout)

    for _ in range(params.iterations):
        for c, em in enumerate(b.emitters):
            force = by_name[f"forces[{c}]"]
            slot = 0
            for cell in owned[c]:
                for body in _cell_bodies(params, cell):
                    em.read(bodies + body * elem)
                others = [x for x in range(cells) if x != cell]
                for other in rng.sample(others, min(params.fmm_neighbors, len(others))):
                    for body in _cell_bodies(params, other):
                        em.read(bodies + body * elem)
                for _body in _cell_bodies(params, cell):
                    em.write(force + slot * elem)
                    slot += 1
        b.barrier()
    return b.finish()


GENERATORS = {
    Workload.RADIX: (generate_radix, radix_layout),
    Workload.FFT: (generate_fft, fft_layout),
    Workload.FMM: (generate_fmm, fmm_layout),
}


def generate(params: GeneratorParams) -> TraceFile:
    return GENERATORS[params.workload][0](params)


def layout_for(params: GeneratorParams) -> MemoryLayout:
    return GENERATORS[params.workload][1](params)

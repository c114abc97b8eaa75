import io
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachelab.config import CacheGeometry, HierarchyConfig, build_config
from cachelab.engine import AccessKind, CacheHierarchy, Level, TraceRecord, miss_rate, run_trace
from cachelab.workloads import (
    GeneratorParams,
    TraceFile,
    TraceFormatError,
    Workload,
    emit_trace,
    fmm_owner,
    generate,
    generate_fft,
    generate_fmm,
    generate_radix,
    layout_for,
    parse_trace,
)

R, W, I = AccessKind.READ, AccessKind.WRITE, AccessKind.IFETCH
HEADER = "#cachelab-trace v1 cores=4 count={} generator=manual seed=0\n"


def roundtrip(trace):
    buf = io.StringIO()
    emit_trace(trace, buf)
    return parse_trace(io.StringIO(buf.getvalue()))


# -- parser ------------------------------------------------------------------


def test_parse_single_record():
    t = parse_trace(io.StringIO(HEADER.format(1) + "2 r 0x1000\n"))
    assert t.records == [TraceRecord(2, R, 0x1000)]
    assert t.core_count == 4 and t.generator == "manual"


def test_parse_header_only():
    t = parse_trace(io.StringIO(HEADER.format(0)))
    assert t.record_count == 0


def test_comments_before_header_only():
    t = parse_trace(io.StringIO("# made by hand\n" + HEADER.format(1) + "0 i 0x4\n"))
    assert t.records[0].kind is I
    with pytest.raises(TraceFormatError, match="line 3"):
        parse_trace(io.StringIO(HEADER.format(1) + "0 i 0x4\n# late comment\n"))


def test_unknown_kind_reports_line():
    with pytest.raises(TraceFormatError, match="unknown access kind 'x' at line 3"):
        parse_trace(io.StringIO(HEADER.format(2) + "0 r 0x0\n2 x 0x1000\n"))


@pytest.mark.parametrize(
    "line, msg",
    [
        ("4 r 0x10", "out of range"),
        ("0 r 4096", "malformed"),
        ("0  r 0x10", "malformed"),
        ("0 r 0x" + "1" * 17, "64 bits"),
        ("0 r 0xABC", "malformed"),
    ],
)
def test_malformed_records(line, msg):
    with pytest.raises(TraceFormatError, match=msg) as exc:
        parse_trace(io.StringIO(HEADER.format(1) + line + "\n"))
    assert exc.value.line == 2


def test_count_mismatch_and_missing_header():
    with pytest.raises(TraceFormatError, match="count=2"):
        parse_trace(io.StringIO(HEADER.format(2) + "0 r 0x0\n"))
    with pytest.raises(TraceFormatError, match="header"):
        parse_trace(io.StringIO("0 r 0x0\n"))


def test_emit_header_only():
    buf = io.StringIO()
    emit_trace(TraceFile([], 2, "radix", 9), buf)
    assert buf.getvalue() == "#cachelab-trace v1 cores=2 count=0 generator=radix seed=9\n"


record_lists = st.integers(1, 8).flatmap(
    lambda cores: st.tuples(
        st.just(cores),
        st.lists(
            st.builds(
                TraceRecord,
                st.integers(0, cores - 1),
                st.sampled_from(list(AccessKind)),
                st.integers(0, 2**64 - 1),
            ),
            max_size=50,
        ),
        st.from_regex(r"[a-z0-9_-]{1,10}", fullmatch=True),
        st.integers(0, 2**31),
    )
)


@settings(max_examples=100)
@given(record_lists)
def test_parse_emit_roundtrip(data):
    cores, records, name, seed = data
    t = TraceFile(records, cores, name, seed)
    assert roundtrip(t) == t


def test_emit_parse_identity_on_text():
    text = HEADER.format(3) + "0 r 0x0\n3 w 0xdeadbeef\n1 i 0x40\n"
    buf = io.StringIO()
    emit_trace(parse_trace(io.StringIO(text)), buf)
    assert buf.getvalue() == text


def test_million_record_roundtrip_is_fast():
    records = [TraceRecord(i % 4, (R, W, I)[i % 3], i * 64) for i in range(10**6)]
    t = TraceFile(records, 4, "bulk", 0)
    start = time.perf_counter()
    assert roundtrip(t).records == records
    assert time.perf_counter() - start < 10


# -- generators --------------------------------------------------------------

ALL_PARAMS = [
    GeneratorParams(Workload.RADIX, cores=2, scale=64, iterations=2, seed=1),
    GeneratorParams(Workload.RADIX, cores=4, scale=100, iterations=1, seed=2, radix_buckets=16),
    GeneratorParams(Workload.FFT, cores=2, scale=8, iterations=2),
    GeneratorParams(Workload.FFT, cores=4, scale=16),
    GeneratorParams(Workload.FMM, cores=2, scale=64, iterations=2, seed=3),
    GeneratorParams(Workload.FMM, cores=4, scale=100, seed=4),
]


@pytest.mark.parametrize("params", ALL_PARAMS, ids=lambda p: f"{p.workload.value}-{p.cores}")
def test_generators_deterministic_and_partitioned(params):
    a, b = generate(params), generate(params)
    assert a == b
    assert a.core_count == params.cores and a.generator == params.workload.value
    layout = layout_for(params)
    private = [r for r in layout.regions if r.owner is not None]
    for x in private:
        for y in private:
            if x is not y:
                assert x.end <= y.start or y.end <= x.start
    for rec in a.records:
        assert layout.allowed(rec.core, rec.address), rec
    assert roundtrip(a) == a


def test_ifetch_every_four_data_refs():
    t = generate_fft(GeneratorParams(Workload.FFT, cores=1, scale=4))
    kinds = [r.kind for r in t.records]
    assert kinds[:5] == [I, R, W, R, W]
    assert kinds.count(I) == 8 and len(kinds) == 40


def _hist_regions(params):
    return {r.name: r for r in layout_for(params).regions}


def test_radix_all_to_all_reads():
    params = GeneratorParams(Workload.RADIX, cores=2, scale=32, iterations=1)
    t = generate_radix(params)
    regions = _hist_regions(params)
    for core in range(2):
        other = regions[f"local_hist[{1 - core}]"]
        reads = {r.address for r in t.records if r.core == core and r.kind is R}
        expected = set(range(other.start, other.end, 4))
        assert expected <= reads


def test_radix_single_core_has_no_cross_core_reads():
    params = GeneratorParams(Workload.RADIX, cores=1, scale=32)
    t = generate_radix(params)
    names = {layout_for(params).region_of(r.address).name for r in t.records}
    assert names == {"code[0]", "keys[0]", "local_hist[0]", "global_hist"}


def test_radix_sharing_causes_invalidations_each_iteration():
    params = GeneratorParams(Workload.RADIX, cores=4, scale=64, iterations=10, radix_buckets=16)
    tiny_l1 = CacheGeometry(128, 2, 64)
    cfg = HierarchyConfig(4, tiny_l1, tiny_l1, CacheGeometry(512, 2, 64))  # 8-block L2
    rep = run_trace(cfg, generate_radix(params), check_invariants=True)
    invalidations = sum(s.invalidations_received for s in rep.l1d)
    assert invalidations >= params.iterations


def test_fft_tiling_4x4_two_cores():
    params = GeneratorParams(Workload.FFT, cores=2, scale=4)
    t = generate_fft(params)
    layout = layout_for(params)
    src = next(r for r in layout.regions if r.name == "src")
    dst = next(r for r in layout.regions if r.name == "dst")
    touched = {}
    for core in range(2):
        reads = [r.address for r in t.records if r.core == core and r.kind is R]
        writes = [r.address for r in t.records if r.core == core and r.kind is W]
        assert len(set(reads)) == len(reads) == 8 and all(a in src for a in reads)
        assert len(set(writes)) == len(writes) == 8 and all(a in dst for a in writes)
        touched[core] = (set(reads), set(writes))
    assert not touched[0][0] & touched[1][0]
    assert not touched[0][1] & touched[1][1]


def test_fft_n_equals_p_is_pointwise_transpose():
    t = generate_fft(GeneratorParams(Workload.FFT, cores=4, scale=4))
    src = layout_for(GeneratorParams(Workload.FFT, cores=4, scale=4)).regions[-2].start
    dst = layout_for(GeneratorParams(Workload.FFT, cores=4, scale=4)).regions[-1].start
    data = [r for r in t.records if r.kind is not I]
    pairs = list(zip(data[::2], data[1::2]))
    assert all(a.kind is R and b.kind is W and a.core == b.core for a, b in pairs)
    for a, b in pairs:
        i, j = divmod((a.address - src) // 16, 4)
        assert (b.address - dst) // 16 == j * 4 + i


def test_fft_divisibility():
    with pytest.raises(ValueError, match="must divide"):
        GeneratorParams(Workload.FFT, cores=3, scale=4)


def test_fft_strided_writes_miss_more_than_sequential_reads():
    params = GeneratorParams(Workload.FFT, cores=4, scale=64)
    cfg = build_config(4, 4, 512)
    rep = run_trace(cfg, generate_fft(params))
    l1d = rep.l1d_total
    assert miss_rate(l1d, "write") > miss_rate(l1d, "read")


def test_fmm_single_cell_is_local():
    params = GeneratorParams(Workload.FMM, cores=1, scale=8, bodies_per_cell=8)
    t = generate_fmm(params)
    layout = layout_for(params)
    names = {layout.region_of(r.address).name for r in t.records}
    assert names == {"code[0]", "bodies", "forces[0]"}
    reads = [r.address for r in t.records if r.kind is R]
    assert len(reads) == 8  # own bodies only


def test_fmm_seed_changes_interaction_lists():
    base = GeneratorParams(Workload.FMM, cores=2, scale=256, seed=1)
    other = GeneratorParams(Workload.FMM, cores=2, scale=256, seed=2)
    assert generate_fmm(base) == generate_fmm(base)
    assert generate_fmm(base) != generate_fmm(other)


def test_fmm_cross_core_sharing_hits_in_l2():
    params = GeneratorParams(Workload.FMM, cores=2, scale=256, seed=0)
    t = generate_fmm(params)
    bodies = next(r for r in layout_for(params).regions if r.name == "bodies")
    cfg = build_config(2, 4, 512)
    sim = CacheHierarchy(cfg)
    filled_by: dict[int, int] = {}
    shared_l2_hits = 0
    for rec in t.records:
        outcome = sim.access(rec)
        if rec.kind is R and rec.address in bodies:
            block = rec.address // 64
            owner = filled_by.setdefault(block, rec.core)
            if outcome.level_hit is Level.L2 and owner != rec.core:
                shared_l2_hits += 1
    assert shared_l2_hits > 0


def test_fmm_cells_split_contiguously():
    params = GeneratorParams(Workload.FMM, cores=4, scale=100)
    owners = [fmm_owner(params, c) for c in range(13)]
    assert owners == sorted(owners) and set(owners) == {0, 1, 2, 3}


@pytest.mark.parametrize("bad", [dict(cores=0), dict(scale=0), dict(iterations=0), dict(seed=-1)])
def test_params_validation(bad):
    kwargs = {"workload": "radix", "cores": 2, "scale": 8, **bad}
    with pytest.raises(ValueError):
        GeneratorParams(**kwargs)

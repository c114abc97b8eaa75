import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachelab.config import (
    MB,
    PRESETS,
    CacheGeometry,
    ConfigError,
    HierarchyConfig,
    build_config,
    load_config,
    lookup_preset,
    parse_config_text,
    serialize_config,
    validate_config,
)

BASE = {"cores": "2", "l1d_kb": "32", "l2_kb": "4096", "assoc_l2": "2", "block_bytes": "64"}


def test_four_mb_two_way_has_32768_sets():
    cfg = validate_config(BASE)
    assert cfg.l2.num_sets == 4 * MB // (2 * 64) == 32768
    assert cfg.core_count == 2
    assert cfg.l1i.capacity_bytes == 32 * 1024


def test_three_mb_rejected_by_default():
    with pytest.raises(ConfigError, match="capacity not a power of two") as exc:
        validate_config({**BASE, "l2_kb": "3072"})
    assert exc.value.key == "l2_kb"


def test_three_times_pow2_allowed_with_flag():
    cfg = validate_config({**BASE, "l2_kb": "6144", "allow_non_pow2": "true"})
    assert cfg.l2.num_sets == 6 * MB // 128 == 3 * 2**14


def test_five_mb_rejected_even_with_flag():
    with pytest.raises(ConfigError, match="power of two"):
        validate_config({**BASE, "l2_kb": "5120", "allow_non_pow2": "true"})


@pytest.mark.parametrize(
    "override, key",
    [
        ({"assoc_l2": "3"}, "assoc_l2"),
        ({"block_bytes": "48"}, "block_bytes"),
        ({"l1d_kb": "0.0625", "assoc_l1": "2"}, "assoc_l1"),  # 64 B cache cannot hold 2 ways
        ({"l2_hit_cycles": "200"}, "l2_hit_cycles"),
        ({"mem_cycles": "0"}, "mem_cycles"),
        ({"l2_kb": "16"}, "l2_kb"),  # smaller than L1d
        ({"clock_mhz": "0"}, "clock_mhz"),
        ({"cores": "0"}, "cores"),
        ({"colour": "blue"}, "colour"),
    ],
)
def test_invalid_documents_name_the_key(override, key):
    with pytest.raises(ConfigError) as exc:
        validate_config({**BASE, **override})
    assert exc.value.key == key


@pytest.mark.parametrize("missing", ["cores", "l1d_kb", "l2_kb"])
def test_missing_required_key(missing):
    doc = dict(BASE)
    del doc[missing]
    with pytest.raises(ConfigError, match="missing required key") as exc:
        validate_config(doc)
    assert exc.value.key == missing


def test_defaults():
    cfg = validate_config(BASE)
    assert (cfg.l1_hit_cycles, cfg.l2_hit_cycles, cfg.memory_latency_cycles) == (1, 10, 100)
    assert cfg.block_size_bytes == 64


def test_geometry_direct_validation():
    with pytest.raises(ConfigError):
        CacheGeometry(1024, 32, 64)
    assert CacheGeometry.fully_associative(8).num_sets == 1


def test_file_format_comments_and_roundtrip(tmp_path):
    text = "# dual core\ncores = 2   # two\nl1d_kb = 32\nl2_kb = 4096\n\nclock_mhz = 2400\n"
    path = tmp_path / "m.cfg"
    path.write_text(text)
    cfg = load_config(str(path))
    assert cfg.clock_hz == 2_400_000_000
    assert load_config(io.StringIO(serialize_config(cfg))) == cfg


def test_file_format_rejects_garbage():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text(["cores = 2", "nonsense"])
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text(["cores = 2", "cores = 4"])


def test_config_is_immutable():
    cfg = validate_config(BASE)
    with pytest.raises(Exception):
        cfg.core_count = 8


# -- presets -----------------------------------------------------------------


def test_kentsfield_sums_paired_l2():
    cfg = lookup_preset("kentsfield-q6600")
    assert cfg.core_count == 4
    assert cfg.l1d.capacity_bytes == 32 * 1024
    assert cfg.l2.capacity_bytes == 8 * MB
    assert cfg.clock_hz == 2_400_000_000


def test_conroe_e6600_matches_its_table_row():
    cfg = lookup_preset("conroe-e6600")
    assert cfg.clock_hz == 2_400_000_000
    assert cfg.l1d.capacity_bytes == 32 * 1024
    assert cfg.l2.capacity_bytes == 4 * MB


def test_conroe_3070_is_the_266_ghz_row():
    cfg = lookup_preset("conroe-3070")
    assert cfg.clock_hz == 2_660_000_000
    assert cfg.l2.capacity_bytes == 4 * MB


def test_wolfdale_e8000():
    cfg = lookup_preset("wolfdale-e8000")
    assert cfg.clock_hz == 2_660_000_000
    assert cfg.l1d.capacity_bytes == 32 * 1024
    assert cfg.l2.capacity_bytes == 6 * MB


@pytest.mark.parametrize("name", ["", "pentium-4"])
def test_unknown_preset_lists_names(name):
    with pytest.raises(ConfigError, match="available: .*kentsfield-q6600"):
        lookup_preset(name)


def test_preset_lookup_returns_copies():
    a = lookup_preset("conroe-e6600")
    b = lookup_preset("conroe-e6600")
    assert a == b and a is not b
    object.__setattr__(a, "core_count", 99)
    assert lookup_preset("conroe-e6600").core_count == 2


def test_every_preset_valid_and_roundtrips():
    for name, preset in PRESETS.items():
        assert preset.name == name and preset.source_row
        assert validate_config(parse_config_text(serialize_config(preset.config).splitlines())) == preset.config


def test_load_config_preset_prefix():
    assert load_config("preset:wolfdale-e8000") == lookup_preset("wolfdale-e8000")


# -- properties --------------------------------------------------------------

@st.composite
def raw_docs(draw):
    """Mostly-valid documents with occasional violations of each rule."""
    block = draw(st.sampled_from([16, 32, 64, 64, 128, 16, 32, 64, 128, 100]))
    assoc_l1 = draw(st.sampled_from([1, 2, 4, 8, 1, 2, 4, 8, 3]))
    assoc_l2 = draw(st.sampled_from([1, 2, 4, 8, 16]))
    l1_sets = draw(st.integers(0, 8).map(lambda e: 2**e))
    l1_bytes = l1_sets * assoc_l1 * block
    l2_bytes = l1_bytes * draw(st.sampled_from([1, 2, 3, 4, 6, 8, 12, 16, 5, 0.5]))
    l1 = draw(st.integers(0, 3))
    l2 = l1 + draw(st.integers(-1, 20))
    mem = l2 + draw(st.integers(-1, 200))
    return {
        "cores": str(draw(st.integers(0, 16))),
        "l1d_kb": str(l1_bytes / 1024),
        "l1i_kb": str(draw(st.sampled_from([l1_bytes, l1_bytes // 2 or 1, l1_bytes * 2])) / 1024),
        "l2_kb": str(l2_bytes / 1024),
        "assoc_l1": str(assoc_l1),
        "assoc_l2": str(assoc_l2),
        "block_bytes": str(block),
        "l1_hit_cycles": str(l1),
        "l2_hit_cycles": str(l2),
        "mem_cycles": str(mem),
        "clock_mhz": draw(st.sampled_from(["1000", "2400", "2.5", "1866.5", "0.0000001", "0"])),
        "allow_non_pow2": str(draw(st.booleans())),
    }


def _check_invariants(cfg: HierarchyConfig):
    for g in (cfg.l1i, cfg.l1d):
        assert all(v & (v - 1) == 0 for v in (g.capacity_bytes, g.associativity, g.block_size_bytes))
    c = cfg.l2.capacity_bytes
    assert c & (c - 1) == 0 or (cfg.allow_non_pow2 and c % 3 == 0 and (c // 3) & (c // 3 - 1) == 0)
    for g in (cfg.l1i, cfg.l1d, cfg.l2):
        assert g.capacity_bytes % (g.associativity * g.block_size_bytes) == 0 and g.num_sets >= 1
    assert cfg.l2.capacity_bytes >= cfg.l1d.capacity_bytes
    assert 0 < cfg.l1_hit_cycles <= cfg.l2_hit_cycles <= cfg.memory_latency_cycles
    assert cfg.clock_hz > 0 and cfg.core_count >= 1


@settings(max_examples=600, deadline=None)
@given(raw_docs())
def test_accepted_configs_satisfy_invariants_and_roundtrip(doc):
    try:
        cfg = validate_config(doc)
    except ConfigError:
        return
    _check_invariants(cfg)
    again = validate_config(parse_config_text(serialize_config(cfg).splitlines()))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_build_config_helper():
    cfg = build_config(4, 32, 8192, clock_mhz=3000)
    assert cfg.core_count == 4 and cfg.clock_hz == 3_000_000_000
    assert cfg.replace(l2_bytes=2 * MB).l2.capacity_bytes == 2 * MB

"""
Cache hierarchy configuration.

A machine is described by a :class:`HierarchyConfig`: per-core split L1
instruction/data caches in front of one L2 shared by every core, flat hit
latencies for each level and a core clock. Configurations are immutable once
validated and can be read from a small ``key = value`` text format or taken
from the named presets in :data:`PRESETS`.
"""

from __future__ import annotations

import copy
import io
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, TextIO

KB = 1024
MB = 1024 * KB

DEFAULT_BLOCK_BYTES = 64
DEFAULT_ASSOCIATIVITY = 2
DEFAULT_L1_HIT_CYCLES = 1
DEFAULT_L2_HIT_CYCLES = 10
DEFAULT_MEMORY_CYCLES = 100
DEFAULT_CLOCK_MHZ = 2000

CONFIG_KEYS = (
    "cores",
    "l1i_kb",
    "l1d_kb",
    "l2_kb",
    "assoc_l1",
    "assoc_l2",
    "block_bytes",
    "l1_hit_cycles",
    "l2_hit_cycles",
    "mem_cycles",
    "clock_mhz",
    "allow_non_pow2",
)
REQUIRED_KEYS = ("cores", "l1d_kb", "l2_kb")


class ConfigError(ValueError):
    """Raised for an invalid configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


def is_pow2(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def is_three_pow2(value: int) -> bool:
    """True for values of the form 3 * 2**k."""
    return value > 0 and value % 3 == 0 and is_pow2(value // 3)


@dataclass(frozen=True)
class CacheGeometry:
    capacity_bytes: int
    associativity: int
    block_size_bytes: int = DEFAULT_BLOCK_BYTES
    allow_non_pow2: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self, prefix: str = "cache") -> None:
        for name in ("capacity_bytes", "associativity", "block_size_bytes"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ConfigError(f"must be a positive integer, got {value!r}", f"{prefix}.{name}")

        if not is_pow2(self.block_size_bytes):
            raise ConfigError(
                f"block size not a power of two: {self.block_size_bytes}",
                f"{prefix}.block_size_bytes",
            )
        if not is_pow2(self.associativity):
            raise ConfigError(
                f"associativity not a power of two: {self.associativity}",
                f"{prefix}.associativity",
            )
        cap = self.capacity_bytes
        if not is_pow2(cap) and not (self.allow_non_pow2 and is_three_pow2(cap)):
            hint = "" if self.allow_non_pow2 else " (set allow_non_pow2 for 3*2^k sizes)"
            raise ConfigError(
                f"capacity not a power of two: {cap}{hint}", f"{prefix}.capacity_bytes"
            )
        way_bytes = self.associativity * self.block_size_bytes
        if way_bytes > cap or cap % way_bytes:
            raise ConfigError(
                f"associativity {self.associativity} x {self.block_size_bytes} B blocks "
                f"exceeds or does not divide capacity {cap} B",
                f"{prefix}.associativity",
            )

    @property
    def num_sets(self) -> int:
        return self.capacity_bytes // (self.associativity * self.block_size_bytes)

    @property
    def num_blocks(self) -> int:
        return self.capacity_bytes // self.block_size_bytes

    @classmethod
    def fully_associative(cls, blocks: int, block_size_bytes: int = DEFAULT_BLOCK_BYTES):
        return cls(blocks * block_size_bytes, blocks, block_size_bytes)


@dataclass(frozen=True)
class HierarchyConfig:
    """Private split L1s per core over one shared, inclusive L2."""

    core_count: int
    l1i: CacheGeometry
    l1d: CacheGeometry
    l2: CacheGeometry
    l1_hit_cycles: int = DEFAULT_L1_HIT_CYCLES
    l2_hit_cycles: int = DEFAULT_L2_HIT_CYCLES
    memory_latency_cycles: int = DEFAULT_MEMORY_CYCLES
    # Integer Hz keeps serialize/validate round-trips exact.
    clock_hz: int = DEFAULT_CLOCK_MHZ * 1_000_000
    allow_non_pow2: bool = False

    def __post_init__(self):
        if not isinstance(self.core_count, int) or self.core_count < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.core_count!r}", "cores")
        for prefix in ("l1i", "l1d", "l2"):
            getattr(self, prefix).validate(prefix)
        if self.l2.capacity_bytes < self.l1d.capacity_bytes:
            raise ConfigError("shared L2 must be at least as large as L1d", "l2_kb")
        if self.l2.block_size_bytes != self.l1d.block_size_bytes or (
            self.l1i.block_size_bytes != self.l1d.block_size_bytes
        ):
            raise ConfigError("all levels must share one block size", "block_bytes")
        latencies = {
            "l1_hit_cycles": self.l1_hit_cycles,
            "l2_hit_cycles": self.l2_hit_cycles,
            "mem_cycles": self.memory_latency_cycles,
        }
        for key, value in latencies.items():
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"latency must be a positive integer, got {value!r}", key)
        if not self.l1_hit_cycles <= self.l2_hit_cycles <= self.memory_latency_cycles:
            raise ConfigError(
                "latency ordering violated: need l1_hit_cycles <= l2_hit_cycles <= mem_cycles",
                "l2_hit_cycles",
            )
        if not isinstance(self.clock_hz, int) or self.clock_hz <= 0:
            raise ConfigError(f"clock must be a positive integer Hz, got {self.clock_hz!r}", "clock_mhz")

    @property
    def block_size_bytes(self) -> int:
        return self.l1d.block_size_bytes

    @property
    def cycle_time_s(self) -> float:
        return 1.0 / self.clock_hz

    def cycles_to_seconds(self, cycles: float) -> float:
        return cycles / self.clock_hz

    def replace(self, **changes) -> "HierarchyConfig":
        """Return a re-validated copy with fields (or ``l2_bytes``/``cores``) changed."""
        fields = dict(self.__dict__)
        if "cores" in changes:
            fields["core_count"] = changes.pop("cores")
        if "l2_bytes" in changes:
            size = changes.pop("l2_bytes")
            fields["l2"] = CacheGeometry(
                size, self.l2.associativity, self.l2.block_size_bytes, self.allow_non_pow2
            )
        fields.update(changes)
        return HierarchyConfig(**fields)


def build_config(
    cores: int,
    l1d_kb: float,
    l2_kb: float,
    *,
    l1i_kb: float | None = None,
    assoc_l1: int = DEFAULT_ASSOCIATIVITY,
    assoc_l2: int = DEFAULT_ASSOCIATIVITY,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
    l1_hit_cycles: int = DEFAULT_L1_HIT_CYCLES,
    l2_hit_cycles: int = DEFAULT_L2_HIT_CYCLES,
    mem_cycles: int = DEFAULT_MEMORY_CYCLES,
    clock_mhz: float = DEFAULT_CLOCK_MHZ,
    allow_non_pow2: bool = False,
) -> HierarchyConfig:
    """Convenience constructor using the config-file vocabulary."""
    raw = {
        "cores": cores,
        "l1i_kb": l1d_kb if l1i_kb is None else l1i_kb,
        "l1d_kb": l1d_kb,
        "l2_kb": l2_kb,
        "assoc_l1": assoc_l1,
        "assoc_l2": assoc_l2,
        "block_bytes": block_bytes,
        "l1_hit_cycles": l1_hit_cycles,
        "l2_hit_cycles": l2_hit_cycles,
        "mem_cycles": mem_cycles,
        "clock_mhz": clock_mhz,
        "allow_non_pow2": allow_non_pow2,
    }
    return validate_config({k: str(v) for k, v in raw.items()})


# -- parsing -----------------------------------------------------------------


def _decimal(key: str, text: str) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise ConfigError(f"not a number: {text!r}", key) from None
    if not value.is_finite():
        raise ConfigError(f"not a finite number: {text!r}", key)
    return value


def _int(key: str, text: str) -> int:
    value = _decimal(key, text)
    if value != value.to_integral_value():
        raise ConfigError(f"expected an integer, got {text!r}", key)
    return int(value)


def _bool(key: str, text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}", key)


def _kb_to_bytes(key: str, text: str) -> int:
    nbytes = _decimal(key, text) * KB
    if nbytes != nbytes.to_integral_value():
        raise ConfigError(f"{text} kB is not a whole number of bytes", key)
    return int(nbytes)


def validate_config(raw: Mapping[str, object]) -> HierarchyConfig:
    """Validate a parsed key/value document into a :class:`HierarchyConfig`.

    Values may be strings (as read from a file) or numbers. Unknown keys and
    missing required keys are errors; the raised :class:`ConfigError` names
    the offending key.
    """
    doc = {str(k).strip(): str(v).strip() for k, v in raw.items()}
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown key (expected one of {', '.join(CONFIG_KEYS)})", unknown[0])
    for key in REQUIRED_KEYS:
        if key not in doc:
            raise ConfigError("missing required key", key)

    allow = _bool("allow_non_pow2", doc.get("allow_non_pow2", "false"))
    block = _int("block_bytes", doc.get("block_bytes", str(DEFAULT_BLOCK_BYTES)))
    assoc_l1 = _int("assoc_l1", doc.get("assoc_l1", str(DEFAULT_ASSOCIATIVITY)))
    assoc_l2 = _int("assoc_l2", doc.get("assoc_l2", str(DEFAULT_ASSOCIATIVITY)))
    l1d_bytes = _kb_to_bytes("l1d_kb", doc["l1d_kb"])
    l1i_bytes = _kb_to_bytes("l1i_kb", doc.get("l1i_kb", doc["l1d_kb"]))
    l2_bytes = _kb_to_bytes("l2_kb", doc["l2_kb"])

    def geometry(key: str, capacity: int, assoc: int, relaxed: bool) -> CacheGeometry:
        try:
            return CacheGeometry(capacity, assoc, block, relaxed)
        except ConfigError as exc:
            field = (exc.key or "").rsplit(".", 1)[-1]
            mapped = {
                "capacity_bytes": key,
                "associativity": "assoc_l2" if key == "l2_kb" else "assoc_l1",
                "block_size_bytes": "block_bytes",
            }.get(field, key)
            raise ConfigError(str(exc).split(": ", 1)[-1], mapped) from None

    # Only the shared L2 takes the 3*2^k relaxation; L1s stay power-of-two.
    l1i = geometry("l1i_kb", l1i_bytes, assoc_l1, False)
    l1d = geometry("l1d_kb", l1d_bytes, assoc_l1, False)
    l2 = geometry("l2_kb", l2_bytes, assoc_l2, allow)

    clock_hz = _decimal("clock_mhz", doc.get("clock_mhz", str(DEFAULT_CLOCK_MHZ))) * 1_000_000
    if clock_hz != clock_hz.to_integral_value():
        raise ConfigError("clock must be a whole number of Hz", "clock_mhz")

    return HierarchyConfig(
        core_count=_int("cores", doc["cores"]),
        l1i=l1i,
        l1d=l1d,
        l2=l2,
        l1_hit_cycles=_int("l1_hit_cycles", doc.get("l1_hit_cycles", str(DEFAULT_L1_HIT_CYCLES))),
        l2_hit_cycles=_int("l2_hit_cycles", doc.get("l2_hit_cycles", str(DEFAULT_L2_HIT_CYCLES))),
        memory_latency_cycles=_int("mem_cycles", doc.get("mem_cycles", str(DEFAULT_MEMORY_CYCLES))),
        clock_hz=int(clock_hz),
        allow_non_pow2=allow,
    )


def parse_config_text(lines: Iterable[str]) -> dict[str, str]:
    """Split ``key = value`` lines into a dict; ``#`` starts a comment."""
    doc: dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key in doc:
            raise ConfigError(f"line {lineno}: duplicate key", key)
        doc[key] = value
    return doc


def load_config(source: str | TextIO) -> HierarchyConfig:
    """Read a config from a path or an open text stream.

    A ``preset:<name>`` string selects an entry of :data:`PRESETS` instead.
    """
    if isinstance(source, str):
        if source.startswith("preset:"):
            return lookup_preset(source[len("preset:"):])
        with open(source, encoding="utf-8") as fh:
            return validate_config(parse_config_text(fh))
    return validate_config(parse_config_text(source))


def _fmt_kb(nbytes: int) -> str:
    return format(Decimal(nbytes) / KB, "f").rstrip("0").rstrip(".") if nbytes % KB else str(nbytes // KB)


def config_to_dict(cfg: HierarchyConfig) -> dict[str, str]:
    return {
        "cores": str(cfg.core_count),
        "l1i_kb": _fmt_kb(cfg.l1i.capacity_bytes),
        "l1d_kb": _fmt_kb(cfg.l1d.capacity_bytes),
        "l2_kb": _fmt_kb(cfg.l2.capacity_bytes),
        "assoc_l1": str(cfg.l1d.associativity),
        "assoc_l2": str(cfg.l2.associativity),
        "block_bytes": str(cfg.block_size_bytes),
        "l1_hit_cycles": str(cfg.l1_hit_cycles),
        "l2_hit_cycles": str(cfg.l2_hit_cycles),
        "mem_cycles": str(cfg.memory_latency_cycles),
        "clock_mhz": format((Decimal(cfg.clock_hz) / 1_000_000).normalize(), "f"),
        "allow_non_pow2": "true" if cfg.allow_non_pow2 else "false",
    }


def serialize_config(cfg: HierarchyConfig) -> str:
    """Render ``cfg`` in the config file format; :func:`load_config` inverts it."""
    if cfg.l1i.associativity != cfg.l1d.associativity:
        raise ConfigError("file format has one L1 associativity; l1i and l1d differ", "assoc_l1")
    out = io.StringIO()
    for key, value in config_to_dict(cfg).items():
        out.write(f"{key} = {value}\n")
    return out.getvalue()


# -- presets -----------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    name: str
    config: HierarchyConfig
    source_row: str


def _preset(name: str, cores: int, clock_ghz: str, l2_mb: str, row: str) -> Preset:
    l2_kb = Decimal(l2_mb) * 1024 if "kB" not in l2_mb else Decimal(l2_mb.split()[0])
    cfg = validate_config(
        {
            "cores": cores,
            "l1i_kb": 32,
            "l1d_kb": 32,
            "l2_kb": l2_kb,
            "clock_mhz": Decimal(clock_ghz) * 1000,
            "allow_non_pow2": "true",
        }
    )
    return Preset(name, cfg, row)


# Rows of the published Core 2 era processor table. L1 is 32 kB (each of I
# and D), the "2xN MB" L2 of the quad parts is summed into one shared L2, and
# the L3 column is ignored. Each entry keeps the row text it was read from.
_PRESET_LIST = [
    _preset("allendale-e4300", 2, "1.8", "2", "Allendale E4xxx E4300 65 1.8 32 2"),
    _preset("allendale-e4400", 2, "2", "2", "Allendale E4xxx E4400 65 2 32 2"),
    _preset("conroe-3070", 2, "2.66", "4", "Xenon 3xxx 3070 65 2.66 32 4"),
    _preset("conroe-e6300", 2, "1.86", "4", "Core-2-duo E6300 65 1.86 32 4"),
    _preset("conroe-e6400", 2, "2.13", "4", "Core-2-duo E6400 65 2.13 32 4"),
    _preset("conroe-e6600", 2, "2.4", "4", "Core-2-duo E6600 65 2.4 32 4"),
    _preset("conroe-e6700", 2, "2.67", "4", "Core-2-duo E6700 65 2.67 32 4"),
    _preset("celeron-e1600", 2, "2.4", "512 kB", "Celeron E1xxx E1600 65 2.4 32 512 kB"),
    _preset("wolfdale-e2220", 2, "2.2", "1", "Wolfdale Pentium E22xx E2220 65 2.2 32 1"),
    _preset("wolfdale-e8000", 2, "2.66", "6", "Wolfdale Core-2-duo E8xxx E8000 45 2.66 32 6"),
    _preset("wolfdale-e3100", 2, "3.5", "6", "Wolfdale Xeon 31x0 E3100 45 3.5 32 6"),
    _preset("kentsfield-q6600", 4, "2.4", "8", "Kentsfield Core 2 quad Q6xxx Q6600 45 2.4 32 2x4"),
    _preset("yorkfield-qx6700", 4, "2.67", "8", "Yorkfield Core 2 Extreme QX6xxx QX6700 45 2.67 32 2x4"),
    _preset("yorkfield-x3330", 4, "2.93", "8", "Yorkfield Xeon X33x0 X3330 45 2.93 32 2x4"),
    _preset("yorkfield-x3333", 4, "3", "6", "Yorkfield Xeon X33x3 X3333 45 3 32 2x3"),
    _preset("yorkfield-qx8100", 4, "3", "12", "Yorkfield Core 2 quad QX8xxx QX8100 45 3 32 2x6"),
]

PRESETS: dict[str, Preset] = {p.name: p for p in _PRESET_LIST}
assert len(PRESETS) == len(_PRESET_LIST), "duplicate preset name"


def lookup_preset(name: str) -> HierarchyConfig:
    """Return a copy of the named preset's configuration."""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}", "preset"
        ) from None
    return copy.deepcopy(preset.config)

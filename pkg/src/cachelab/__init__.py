"""cachelab: trace-driven multicore cache hierarchy simulation and timing models."""

__version__ = "0.1.0"

from .config import (  # noqa: E402
    CacheGeometry,
    ConfigError,
    HierarchyConfig,
    PRESETS,
    build_config,
    load_config,
    lookup_preset,
    serialize_config,
    validate_config,
)
from .engine import (  # noqa: E402
    AccessKind,
    AccessOutcome,
    CacheHierarchy,
    CacheStats,
    Level,
    SimReport,
    TraceRecord,
    miss_rate,
    run_trace,
)
from .workloads import GeneratorParams, TraceFile, Workload, emit_trace, generate, parse_trace  # noqa: E402

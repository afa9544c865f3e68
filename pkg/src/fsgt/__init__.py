"""Finite-size gradient-transport toolkit.

Offline threshold-cascade measurements on saved training-field snapshots:
snapshot storage, deterministic probe-graph construction, the synchronous
redistribution cascade, matched randomized controls, cross-scale exponent
fits, and performance-bridge statistics, wrapped in a batch CLI.
"""

from .bridge import (
    ExternalMetricSeries,
    LrSchedule,
    MetricEntry,
    fit_external_exponent,
    lr_partial_pearson,
    pearson,
    reconstruct_lr,
)
from .cascade import (
    CascadeConfig,
    CascadeResult,
    compute_active_set,
    relax_step,
    run_cascade,
)
from .errors import (
    CascadeNumericsError,
    ConfigError,
    DataError,
    FsgtError,
    NoFittableStepsError,
    SnapshotCorruptError,
    SnapshotFormatError,
)
from .graphs import GraphKey, ProbeGraph, build_ba_graph, get_or_build
from .nulls import NullDecomposition, NullVariant, decompose, generate_null
from .scaling import (
    StepScalingFit,
    StepSkip,
    TertileSummary,
    TransportRecord,
    WindowSummary,
    fit_step,
    loglog_fit,
    rolling_median,
    tertile_deltas,
    window_summary,
)
from .snapshots import (
    FieldSnapshot,
    FieldStats,
    SnapshotManifest,
    field_quantile,
    field_stats,
    read_snapshot,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "CascadeConfig",
    "CascadeNumericsError",
    "CascadeResult",
    "ConfigError",
    "DataError",
    "ExternalMetricSeries",
    "FieldSnapshot",
    "FieldStats",
    "FsgtError",
    "GraphKey",
    "LrSchedule",
    "MetricEntry",
    "NoFittableStepsError",
    "NullDecomposition",
    "NullVariant",
    "ProbeGraph",
    "SnapshotCorruptError",
    "SnapshotFormatError",
    "SnapshotManifest",
    "StepScalingFit",
    "StepSkip",
    "TertileSummary",
    "TransportRecord",
    "WindowSummary",
    "build_ba_graph",
    "compute_active_set",
    "decompose",
    "field_quantile",
    "field_stats",
    "fit_external_exponent",
    "fit_step",
    "generate_null",
    "get_or_build",
    "loglog_fit",
    "lr_partial_pearson",
    "pearson",
    "read_snapshot",
    "reconstruct_lr",
    "relax_step",
    "rolling_median",
    "run_cascade",
    "tertile_deltas",
    "window_summary",
    "write_snapshot",
]

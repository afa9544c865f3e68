"""Checkpoint and gradient-dump ingestion for the transport probe."""

from .errors import IngestConfigError, IngestDataError, IngestError
from .export import CheckpointPair, export_delta, export_gradient
from .schedule import build_schedule, emit_schedule
from .snapshot_io import write_field_snapshot
from .tensors import TensorSelector, flatten_ordered, load_tensors

__version__ = "0.1.0"

__all__ = [
    "CheckpointPair",
    "IngestConfigError",
    "IngestDataError",
    "IngestError",
    "TensorSelector",
    "build_schedule",
    "emit_schedule",
    "export_delta",
    "export_gradient",
    "flatten_ordered",
    "load_tensors",
    "write_field_snapshot",
]

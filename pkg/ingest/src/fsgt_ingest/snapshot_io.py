"""Writer for the field-snapshot file pair consumed by the probe toolkit.

The interface is the on-disk format: ``<stem>.fsnap`` holds the raw field as
contiguous little-endian IEEE-754 binary32 (no header) and ``<stem>.json``
holds the manifest with a SHA-256 checksum over the data bytes. This module
implements the format directly so the ingest package stays decoupled from
the probe's internals.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import IngestDataError

SCHEMA_VERSION = "1"


def write_field_snapshot(
    values: np.ndarray,
    out_dir,
    family: str,
    model_id: str,
    field_kind: str,
    step: int,
    source: str,
    seed: int | None = None,
) -> tuple[Path, Path]:
    """Write the pair and return (data_path, manifest_path)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    if arr.size == 0:
        raise IngestDataError("refusing to write an empty field")
    bad = ~np.isfinite(arr)
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise IngestDataError(f"non-finite value at flattened index {first}")
    data = arr.tobytes()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "family": family,
        "model_id": model_id,
        "field_kind": field_kind,
        "step": int(step),
        "n_elements": int(arr.size),
        "dtype": "f32",
        "byte_order": "le",
        "seed": seed,
        "source": source,
        "checksum": hashlib.sha256(data).hexdigest(),
    }
    stem = f"{model_id}__{field_kind}__step{step:08d}"
    data_path = out_dir / (stem + ".fsnap")
    manifest_path = out_dir / (stem + ".json")
    data_path.write_bytes(data)
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return data_path, manifest_path

"""Field-snapshot storage and large-field quantile estimation.

A snapshot is a pair of files sharing one stem: ``<stem>.fsnap`` holds the
raw field as a contiguous little-endian IEEE-754 binary32 array (no header),
and ``<stem>.json`` holds the manifest. The manifest records a SHA-256
checksum of the data bytes; reads verify both the checksum and the byte
length. Values are stored in float32 but all downstream arithmetic runs in
float64.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import SnapshotCorruptError, SnapshotFormatError

SCHEMA_VERSION = "1"

FIELD_KINDS = (
    "raw_gradient",
    "checkpoint_delta",
    "synthetic",
    "null_n0",
    "null_n1",
    "null_n2",
)

NULL_FIELD_KINDS = ("null_n0", "null_n1", "null_n2")

DATA_SUFFIX = ".fsnap"
MANIFEST_SUFFIX = ".json"

#: Above this many elements the magnitude quantile is taken on a seeded
#: uniform-random subsample of exactly this size.
DEFAULT_SUBSAMPLE_CAP = 10_000_000

_REQUIRED_MANIFEST_KEYS = (
    "schema_version",
    "family",
    "model_id",
    "field_kind",
    "step",
    "n_elements",
    "dtype",
    "byte_order",
    "checksum",
)


@dataclass(frozen=True)
class SnapshotManifest:
    """Metadata for one stored field snapshot."""

    family: str
    model_id: str
    field_kind: str
    step: int
    n_elements: int
    source: str = ""
    seed: int | None = None
    dtype: str = "f32"
    byte_order: str = "le"
    schema_version: str = SCHEMA_VERSION
    checksum: str | None = None

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise SnapshotFormatError(
                f"unsupported schema_version {self.schema_version!r}"
            )
        if self.field_kind not in FIELD_KINDS:
            raise SnapshotFormatError(f"unknown field_kind {self.field_kind!r}")
        if self.n_elements <= 0:
            raise SnapshotFormatError("n_elements must be positive")
        if self.step < 0:
            raise SnapshotFormatError("step must be >= 0")
        if self.dtype != "f32":
            raise SnapshotFormatError(f"unsupported dtype {self.dtype!r}")
        if self.byte_order != "le":
            raise SnapshotFormatError(f"unsupported byte_order {self.byte_order!r}")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "family": self.family,
            "model_id": self.model_id,
            "field_kind": self.field_kind,
            "step": self.step,
            "n_elements": self.n_elements,
            "dtype": self.dtype,
            "byte_order": self.byte_order,
            "seed": self.seed,
            "source": self.source,
            "checksum": self.checksum,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SnapshotManifest":
        # Unknown keys are ignored so older readers survive schema growth.
        missing = [k for k in _REQUIRED_MANIFEST_KEYS if k not in raw]
        if missing:
            raise SnapshotFormatError(f"manifest missing keys: {missing}")
        manifest = cls(
            schema_version=str(raw["schema_version"]),
            family=str(raw["family"]),
            model_id=str(raw["model_id"]),
            field_kind=str(raw["field_kind"]),
            step=int(raw["step"]),
            n_elements=int(raw["n_elements"]),
            dtype=str(raw["dtype"]),
            byte_order=str(raw["byte_order"]),
            seed=None if raw.get("seed") is None else int(raw["seed"]),
            source=str(raw.get("source", "")),
            checksum=None if raw["checksum"] is None else str(raw["checksum"]),
        )
        manifest.validate()
        return manifest

    def default_stem(self) -> str:
        return f"{self.model_id}__{self.field_kind}__step{self.step:08d}"


@dataclass(frozen=True)
class FieldSnapshot:
    """One signed field u(t) plus its manifest.

    Values are coerced to a read-only float32 array; non-finite entries are
    rejected at construction with the index of the first offender.
    """

    manifest: SnapshotManifest
    values: np.ndarray

    def __post_init__(self) -> None:
        self.manifest.validate()
        arr = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if arr.size != self.manifest.n_elements:
            raise SnapshotFormatError(
                f"value count {arr.size} != manifest n_elements "
                f"{self.manifest.n_elements}"
            )
        bad = ~np.isfinite(arr)
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            raise SnapshotFormatError(f"non-finite value at index {first}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def data_bytes(self) -> bytes:
        return self.values.astype("<f4", copy=False).tobytes()


@dataclass(frozen=True)
class FieldStats:
    """Moments and threshold candidate of a field, ignoring non-finite entries."""

    mean: float
    std: float
    q90_abs: float
    n_nonfinite: int


def field_stats(values, subsample_cap: int = DEFAULT_SUBSAMPLE_CAP, seed: int = 0) -> FieldStats:
    """Mean, population std and Q90 magnitude of ``values``.

    The std uses ddof=0 (these moments parameterize the moment-matched
    Gaussian control, which matches mean and variance of the signed entries).
    """
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    finite = np.isfinite(arr)
    n_nonfinite = int(arr.size - finite.sum())
    kept = arr[finite] if n_nonfinite else arr
    if kept.size == 0:
        raise ValueError("no finite values")
    return FieldStats(
        mean=float(np.mean(kept)),
        std=float(np.std(kept)),
        q90_abs=field_quantile(kept, 0.9, subsample_cap=subsample_cap, seed=seed),
        n_nonfinite=n_nonfinite,
    )


def field_quantile(
    values,
    q: float,
    subsample_cap: int = DEFAULT_SUBSAMPLE_CAP,
    seed: int = 0,
) -> float:
    """Type-7 quantile of the field magnitudes |values|.

    Up to ``subsample_cap`` elements the quantile is exact (linear
    interpolation between order statistics). Beyond the cap it is taken on a
    uniform-random subsample of exactly ``subsample_cap`` magnitudes drawn
    once, without replacement, from a PCG64 stream seeded with ``seed``
    (shuffle-prefix of a full index permutation).
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("empty input")
    if subsample_cap < 1:
        raise ValueError("subsample_cap must be >= 1")
    mags = np.abs(arr)
    if mags.size > subsample_cap:
        rng = np.random.default_rng(seed)
        idx = rng.permutation(mags.size)[:subsample_cap]
        mags = mags[idx]
    return float(np.quantile(mags, q))


def write_snapshot(snapshot: FieldSnapshot, out_dir, stem: str | None = None) -> tuple[Path, Path]:
    """Write the ``.fsnap``/``.json`` pair for ``snapshot`` into ``out_dir``.

    The checksum is computed over the data bytes and embedded in the emitted
    manifest. Writing the same snapshot twice produces byte-identical files.
    Returns (data_path, manifest_path).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if stem is None:
        stem = snapshot.manifest.default_stem()
    data = snapshot.data_bytes()
    checksum = hashlib.sha256(data).hexdigest()
    manifest = replace(snapshot.manifest, checksum=checksum)

    data_path = out_dir / (stem + DATA_SUFFIX)
    manifest_path = out_dir / (stem + MANIFEST_SUFFIX)
    data_path.write_bytes(data)
    manifest_path.write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return data_path, manifest_path


def _resolve_pair(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix == DATA_SUFFIX:
        return path, path.with_suffix(MANIFEST_SUFFIX)
    if path.suffix == MANIFEST_SUFFIX:
        return path.with_suffix(DATA_SUFFIX), path
    return path.with_suffix(DATA_SUFFIX), path.with_suffix(MANIFEST_SUFFIX)


def read_manifest(path) -> SnapshotManifest:
    _, manifest_path = _resolve_pair(path)
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SnapshotFormatError(f"invalid manifest JSON: {manifest_path}") from exc
    return SnapshotManifest.from_dict(raw)


def read_snapshot(path) -> FieldSnapshot:
    """Read a snapshot pair, verifying byte length and checksum.

    ``path`` may point at either file of the pair or at the shared stem.
    """
    data_path, manifest_path = _resolve_pair(path)
    manifest = read_manifest(manifest_path)
    data = data_path.read_bytes()
    expected_len = manifest.n_elements * 4
    if len(data) != expected_len:
        raise SnapshotFormatError(
            f"{data_path}: data length {len(data)} != n_elements*4 = {expected_len}"
        )
    if manifest.checksum is None:
        raise SnapshotFormatError(f"{manifest_path}: manifest has no checksum")
    digest = hashlib.sha256(data).hexdigest()
    if digest != manifest.checksum:
        raise SnapshotCorruptError(
            f"{data_path}: checksum mismatch (manifest {manifest.checksum[:12]}..., "
            f"data {digest[:12]}...)"
        )
    values = np.frombuffer(data, dtype="<f4").astype(np.float32)
    return FieldSnapshot(manifest=manifest, values=values)

"""Snapshot export: checkpoint-difference fields and raw-gradient dumps.

The checkpoint-difference field is the elementwise update proxy
theta(step_b) - theta(step_a) over the selected tensors, flattened in
ascending tensor-name order (row-major within each tensor). The
concatenation order is recorded in the manifest source text, because
cascade statistics depend on the value-to-node assignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestDataError
from .snapshot_io import write_field_snapshot
from .tensors import TensorSelector, flatten_ordered, load_tensors

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckpointPair:
    model_id: str
    step_a: int
    step_b: int
    uri_a: str
    uri_b: str

    def __post_init__(self) -> None:
        if self.step_b <= self.step_a:
            raise IngestDataError(
                f"step_b must exceed step_a, got {self.step_a} -> {self.step_b}"
            )

    @property
    def dt(self) -> int:
        return self.step_b - self.step_a


def _diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # subtract in the wider of the two dtypes (at least f32), store f32
    work = np.result_type(a.dtype, b.dtype, np.float32)
    return (
        b.astype(work, copy=False) - a.astype(work, copy=False)
    ).astype(np.float32)


def export_delta(
    pair: CheckpointPair,
    selector: TensorSelector,
    out_dir,
    family: str,
) -> tuple[Path, Path]:
    """Write the checkpoint-difference snapshot for one aligned pair."""
    tensors_a = load_tensors(pair.uri_a)
    tensors_b = load_tensors(pair.uri_b)
    names = selector.select(tensors_a.keys())
    missing_b = [n for n in names if n not in tensors_b]
    if missing_b:
        raise IngestDataError(
            f"tensors selected from step {pair.step_a} missing at "
            f"step {pair.step_b}: {missing_b}"
        )
    mismatched = [
        f"{n}: {tensors_a[n].shape} vs {tensors_b[n].shape}"
        for n in names
        if tensors_a[n].shape != tensors_b[n].shape
    ]
    if mismatched:
        raise IngestDataError(
            "tensor shape mismatch between checkpoints: " + "; ".join(mismatched)
        )
    deltas = {n: _diff(tensors_a[n], tensors_b[n]) for n in names}
    field = flatten_ordered(deltas, names)
    if not field.any():
        log.warning(
            "%s steps %d->%d: delta field is identically zero "
            "(will be a zero cascade downstream)",
            pair.model_id,
            pair.step_a,
            pair.step_b,
        )
    source = (
        f"checkpoint delta {pair.step_a}->{pair.step_b} (dt={pair.dt}); "
        f"tensor order: {','.join(names)}"
    )
    return write_field_snapshot(
        field,
        out_dir,
        family=family,
        model_id=pair.model_id,
        field_kind="checkpoint_delta",
        step=pair.step_a,
        source=source,
    )


def export_gradient(
    uri,
    selector: TensorSelector,
    out_dir,
    family: str,
    model_id: str,
    step: int,
) -> tuple[Path, Path]:
    """Write a raw-gradient snapshot from one released gradient artifact."""
    tensors = load_tensors(uri)
    names = selector.select(tensors.keys())
    field = flatten_ordered(
        {n: tensors[n].astype(np.float32) for n in names}, names
    )
    source = f"raw gradient dump {Path(uri).name}; tensor order: {','.join(names)}"
    return write_field_snapshot(
        field,
        out_dir,
        family=family,
        model_id=model_id,
        field_kind="raw_gradient",
        step=step,
        source=source,
    )

"""Tensor-archive loading and name selection.

Checkpoints are read from safetensors files, with ``.npz`` archives as the
fallback for plain serialized tensors. Selection is glob-based over tensor
names; persistent buffers are kept out of the field by not matching them
(or by listing them in the exclude patterns). Selected names are always
processed in ascending order so the flattened field layout is stable across
runs and machines.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestDataError


def load_tensors(uri) -> dict[str, np.ndarray]:
    path = Path(uri)
    if not path.is_file():
        raise IngestDataError(f"tensor archive not found: {path}")
    if path.suffix == ".safetensors":
        from safetensors.numpy import load_file

        return dict(load_file(str(path)))
    if path.suffix == ".npz":
        with np.load(path) as archive:
            return {name: archive[name] for name in archive.files}
    raise IngestDataError(
        f"unsupported tensor archive {path.name}: expected .safetensors or .npz"
    )


@dataclass(frozen=True)
class TensorSelector:
    """Glob include/exclude patterns plus an optional expected inventory.

    Every inventory name must survive selection; this is the contract that
    catches renamed or missing tensors in a release.
    """

    include: tuple[str, ...]
    exclude: tuple[str, ...] = ()
    inventory: tuple[str, ...] = ()

    def select(self, names) -> list[str]:
        """Matching names in ascending order."""
        chosen = []
        for name in sorted(names):
            if not any(fnmatch.fnmatchcase(name, pat) for pat in self.include):
                continue
            if any(fnmatch.fnmatchcase(name, pat) for pat in self.exclude):
                continue
            chosen.append(name)
        if not chosen:
            raise IngestDataError(
                f"selector matched no tensors (include={list(self.include)}, "
                f"exclude={list(self.exclude)})"
            )
        missing = [n for n in self.inventory if n not in chosen]
        if missing:
            raise IngestDataError(
                f"inventory tensors missing from selection: {missing}"
            )
        return chosen


def flatten_ordered(tensors: dict[str, np.ndarray], names: list[str]) -> np.ndarray:
    """Concatenate the named tensors row-major, in the given name order."""
    parts = [np.ascontiguousarray(tensors[name]).reshape(-1) for name in names]
    return np.concatenate(parts) if len(parts) > 1 else parts[0]

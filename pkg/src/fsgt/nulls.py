"""Matched randomized control fields and the distribution/assignment split.

For a real snapshot at released training step t, three single-realization
controls are generated with effective seed ``base_seed + t`` (base 42):

* n0 - i.i.d. standard Gaussian field, independent of the real values;
* n1 - i.i.d. Gaussian matched to the real field's mean and population
  variance;
* n2 - a uniform random permutation of the real signed values.

One control per (checkpoint, variant); no averaging over seeds. The three
variants draw from independent sub-streams of the checkpoint seed
(SeedSequence entropy ``[seed, variant_code]``); Gaussian draws use numpy's
ziggurat sampler on PCG64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import DataError
from .snapshots import FieldSnapshot, FieldStats, field_stats


class NullVariant(str, Enum):
    REAL = "real"
    N0 = "n0"
    N1 = "n1"
    N2 = "n2"

    @property
    def field_kind(self) -> str:
        if self is NullVariant.REAL:
            raise ValueError("real is not a null field kind")
        return f"null_{self.value}"


_VARIANT_STREAM = {NullVariant.N0: 0, NullVariant.N1: 1, NullVariant.N2: 2}

DEFAULT_NULL_BASE_SEED = 42


@dataclass(frozen=True)
class NullDecomposition:
    """Split of a real-minus-Gaussian offset into a marginal-distribution
    part and a value-to-node assignment part.

    ``total`` is stored as ``dist + assign`` so the identity
    total == dist + assign holds exactly in floating point; it equals
    x_real - x_n0 up to rounding.
    """

    total: float
    dist: float
    assign: float


def decompose(x_real: float, x_n0: float, x_n2: float) -> NullDecomposition:
    for name, x in (("x_real", x_real), ("x_n0", x_n0), ("x_n2", x_n2)):
        if not math.isfinite(x):
            raise DataError(f"{name} is not finite: {x}")
    dist = x_n2 - x_n0
    assign = x_real - x_n2
    return NullDecomposition(total=dist + assign, dist=dist, assign=assign)


def null_seed(step: int, base_seed: int = DEFAULT_NULL_BASE_SEED) -> int:
    """Checkpoint-specific seed: base shifted by the released step value."""
    return base_seed + step


def generate_null(
    real_snapshot: FieldSnapshot,
    variant: NullVariant,
    base_seed: int = DEFAULT_NULL_BASE_SEED,
    stats: FieldStats | None = None,
) -> FieldSnapshot:
    """Build the matched control field for ``real_snapshot``.

    ``stats`` may be passed to avoid recomputing moments when several
    variants are generated from one snapshot.
    """
    if variant is NullVariant.REAL:
        raise DataError("cannot generate the real variant")
    manifest = real_snapshot.manifest
    n = manifest.n_elements
    seed = null_seed(manifest.step, base_seed)
    rng = np.random.default_rng([seed, _VARIANT_STREAM[variant]])

    if variant is NullVariant.N0:
        values = rng.standard_normal(n).astype(np.float32)
    elif variant is NullVariant.N1:
        if stats is None:
            stats = field_stats(real_snapshot.values)
        values = rng.normal(stats.mean, stats.std, size=n).astype(np.float32)
    else:
        values = rng.permutation(real_snapshot.values)

    null_manifest = replace(
        manifest,
        field_kind=variant.field_kind,
        seed=seed,
        source=(
            f"{variant.value} control of {manifest.model_id} "
            f"step {manifest.step} (seed {seed})"
        ),
        checksum=None,
    )
    return FieldSnapshot(manifest=null_manifest, values=values)
